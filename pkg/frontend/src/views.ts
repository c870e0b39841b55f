/** DOM renderers for the three screens.  Views are functions of the
 * view-model plus an actions object; they build fresh elements on each
 * render and never talk to the network themselves.
 */

import type { PlotDataResponse } from "./api.js";
import {
  boundaryMarks,
  classColor,
  curvePath,
  segmentBoxes,
  timeToX,
} from "./overlay.js";
import {
  draftValid,
  rankForClass,
  segmentKey,
  type Draft,
  type ViewModel,
} from "./model.js";

export interface Actions {
  play(songId: string, index: number): void;
  setPrompt(classId: string, text: string): void;
  rescore(): void;
  selectClass(classId: string): void;
  selectView(view: string): void;
}

const SVG_NS = "http://www.w3.org/2000/svg";
const PLOT_W = 800;
const CURVE_H = 60;
const LANE_H = 18;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function fmtTime(seconds: number): string {
  const m = Math.floor(seconds / 60);
  const s = seconds - m * 60;
  return `${m}:${s.toFixed(1).padStart(4, "0")}`;
}

function fmtProb(p: number): string {
  return p >= 0.995 ? "1.00" : p.toFixed(2);
}

export function navBar(vm: ViewModel, active: string, actions: Actions): HTMLElement {
  const nav = el("nav", "topnav");
  for (const [view, label] of [
    ["library", "Library"],
    ["classes", "Classes"],
    ["prompts", "Prompts"],
  ] as const) {
    const link = el("button", view === active ? "tab active" : "tab", label);
    link.addEventListener("click", () => actions.selectView(view));
    nav.appendChild(link);
  }
  nav.appendChild(el("span", "revision", `revision ${vm.revision}`));
  return nav;
}

export function noticeBanner(vm: ViewModel): HTMLElement | null {
  if (!vm.notice) {
    return null;
  }
  return el("div", "notice", vm.notice);
}

// ----------------------------------------------------------------- library

export function libraryView(
  vm: ViewModel,
  plots: Record<string, PlotDataResponse>,
  actions: Actions,
): HTMLElement {
  const root = el("section", "library");
  if (vm.songs.length === 0) {
    root.appendChild(el("p", "empty", "No songs in the catalog."));
    return root;
  }
  for (const song of vm.songs) {
    const card = el("article", "song-card");
    const head = el("header");
    head.appendChild(el("h3", undefined, song.name));
    head.appendChild(el("span", "meta",
      `${fmtTime(song.duration)} · ${song.segment_count} segments`));
    card.appendChild(head);
    const plot = plots[song.song_id];
    if (plot) {
      card.appendChild(songOverlay(plot, vm.classIds, actions));
    }
    root.appendChild(card);
  }
  return root;
}

/** Activity curves + boundary ticks + clickable segment lane for one song. */
export function songOverlay(
  plot: PlotDataResponse,
  classIds: string[],
  actions: Actions,
): SVGSVGElement {
  const height = CURVE_H + LANE_H;
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${PLOT_W} ${height}`);
  svg.setAttribute("class", "overlay");

  for (const [scores, cls] of [
    [plot.music, "music-curve"],
    [plot.speech, "speech-curve"],
  ] as const) {
    const d = curvePath(plot.times, scores, plot.duration, PLOT_W, CURVE_H);
    if (d) {
      const path = document.createElementNS(SVG_NS, "path");
      path.setAttribute("d", d);
      path.setAttribute("class", cls);
      path.setAttribute("fill", "none");
      svg.appendChild(path);
    }
  }

  for (const mark of boundaryMarks(
    plot.boundaries, plot.boundary_snapped, plot.duration, PLOT_W)) {
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(mark.x));
    line.setAttribute("x2", String(mark.x));
    line.setAttribute("y1", "0");
    line.setAttribute("y2", String(height));
    line.setAttribute("class", mark.snapped ? "boundary snapped" : "boundary");
    svg.appendChild(line);
  }

  for (const box of segmentBoxes(plot, PLOT_W)) {
    const rect = document.createElementNS(SVG_NS, "rect");
    rect.setAttribute("x", String(box.x));
    rect.setAttribute("y", String(CURVE_H + 2));
    rect.setAttribute("width", String(Math.max(box.width - 1, 1)));
    rect.setAttribute("height", String(LANE_H - 4));
    rect.setAttribute("fill", classColor(box.predicted, classIds));
    rect.setAttribute("class", "segment-box");
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = `#${box.index} ${box.predicted ?? "unscored"}`;
    rect.appendChild(title);
    rect.addEventListener("click", () => actions.play(plot.song_id, box.index));
    svg.appendChild(rect);
  }
  return svg;
}

// ----------------------------------------------------------------- classes

export function classView(
  vm: ViewModel,
  classId: string | null,
  actions: Actions,
): HTMLElement {
  const root = el("section", "classes");
  const picker = el("div", "class-picker");
  for (const id of vm.classIds) {
    const btn = el("button", id === classId ? "chip active" : "chip", id);
    btn.style.borderColor = classColor(id, vm.classIds);
    btn.addEventListener("click", () => actions.selectClass(id));
    picker.appendChild(btn);
  }
  root.appendChild(picker);
  if (classId === null) {
    root.appendChild(el("p", "empty", "Pick a class to see its ranked segments."));
    return root;
  }

  const list = el("ol", "ranked");
  const changed = new Set(vm.lastDiff?.changedKeys ?? []);
  for (const item of rankForClass(vm, classId)) {
    const key = segmentKey(item.songId, item.index);
    const row = el("li", changed.has(key) ? "ranked-row changed" : "ranked-row");
    const play = el("button", "play", "▶");
    play.addEventListener("click", () => actions.play(item.songId, item.index));
    row.appendChild(play);
    const badge = el("span", "prob-badge", fmtProb(item.prob));
    badge.style.background = classColor(classId, vm.classIds);
    row.appendChild(badge);
    row.appendChild(el("span", "song", item.songName));
    row.appendChild(el("span", "range",
      `${fmtTime(item.start)}–${fmtTime(item.end)}`));
    if (item.predicted !== classId) {
      row.appendChild(el("span", "elsewhere", `→ ${item.predicted}`));
    }
    if (item.nonMusic) {
      row.appendChild(el("span", "flag", "non-music"));
    }
    list.appendChild(row);
  }
  root.appendChild(list);
  return root;
}

// ----------------------------------------------------------------- prompts

export function promptEditor(vm: ViewModel, actions: Actions): HTMLElement {
  const root = el("section", "prompts");
  root.appendChild(el("p", "hint",
    "One prompt per line.  Edits apply only when you rescore; the catalog "
    + "keeps its current scores until then."));
  for (const cls of vm.draft.classes) {
    root.appendChild(promptCard(cls.id, vm.draft, actions));
  }
  const bar = el("div", "rescore-bar");
  const button = el("button", "rescore",
    vm.rescoreBusy ? "Rescoring…" : "Rescore from prompts");
  button.disabled = vm.rescoreBusy || !draftValid(vm.draft);
  button.addEventListener("click", () => actions.rescore());
  bar.appendChild(button);
  if (vm.lastDiff) {
    const text = vm.lastDiff.consistent
      ? `${vm.lastDiff.changedCount} segments changed class`
      : `client saw ${vm.lastDiff.changedCount} changes but the service `
        + `reported ${vm.lastDiff.serviceCount}`;
    bar.appendChild(el("span",
      vm.lastDiff.consistent ? "diff" : "diff inconsistent", text));
  }
  root.appendChild(bar);
  return root;
}

function promptCard(classId: string, draft: Draft, actions: Actions): HTMLElement {
  const cls = draft.classes.find((c) => c.id === classId)!;
  const card = el("article", "prompt-card");
  card.appendChild(el("h3", undefined, `${cls.displayName} (${cls.id})`));
  const area = el("textarea");
  area.value = cls.promptText;
  area.rows = Math.max(2, cls.promptText.split("\n").length);
  area.addEventListener("input", () => actions.setPrompt(cls.id, area.value));
  card.appendChild(area);
  if (cls.error) {
    card.appendChild(el("p", "class-error", cls.error));
  }
  return card;
}

// ---------------------------------------------------------------- playback

export function playerBar(vm: ViewModel, audio: HTMLAudioElement): HTMLElement {
  const bar = el("footer", "player");
  if (vm.playback) {
    const name = vm.songs.find((s) => s.song_id === vm.playback!.songId)?.name
      ?? vm.playback.songId;
    bar.appendChild(el("span", "now-playing",
      `playing ${name} · segment ${vm.playback.index}`));
  } else {
    bar.appendChild(el("span", "now-playing idle", "nothing playing"));
  }
  bar.appendChild(audio);
  return bar;
}

export { timeToX };
