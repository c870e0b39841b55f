/** Pure view-model for the catalog browser.
 *
 * Everything here is plain data and pure functions so the rendering layer
 * stays trivial and the behavior is unit-testable without a DOM:
 *
 * - the displayed rankings always come from one service revision;
 *   {@link buildViewModel} refuses to mix responses from different ones;
 * - prompt edits accumulate in a separate draft and never touch the
 *   displayed results until a rescore round-trip replaces them;
 * - the prediction diff shown after a rescore is recomputed client-side
 *   from the before/after catalogs and reconciled with the count the
 *   service reported, so a mismatch is surfaced instead of hidden.
 */

import type {
  ClassesResponse,
  ClassError,
  SegmentsResponse,
  SongsResponse,
  SongSummary,
} from "./api.js";

export interface RankedSegment {
  songId: string;
  songName: string;
  index: number;
  start: number;
  end: number;
  prob: number;
  predicted: string;
  nonMusic: boolean;
}

export interface ClassDraft {
  id: string;
  displayName: string;
  /** Textarea contents: one prompt per line. */
  promptText: string;
  error: string | null;
}

export interface Draft {
  logitScale: number;
  classes: ClassDraft[];
  dirty: boolean;
}

export interface Playback {
  songId: string;
  index: number;
}

export interface Diff {
  changedCount: number;
  changedKeys: string[];
}

export interface DiffReport extends Diff {
  serviceCount: number;
  /** True when the client-side diff agrees with the service's. */
  consistent: boolean;
}

export interface ViewModel {
  revision: number;
  songs: SongSummary[];
  segments: Record<string, SegmentsResponse>;
  classIds: string[];
  draft: Draft;
  playback: Playback | null;
  rescoreBusy: boolean;
  notice: string | null;
  lastDiff: DiffReport | null;
}

export class RevisionMismatchError extends Error {
  constructor(expected: number, got: number, where: string) {
    super(`${where} is at revision ${got}, expected ${expected}; reload needed`);
    this.name = "RevisionMismatchError";
  }
}

export function segmentKey(songId: string, index: number): string {
  return `${songId}:${index}`;
}

export function buildViewModel(
  songs: SongsResponse,
  segments: SegmentsResponse[],
  classes: ClassesResponse,
): ViewModel {
  const byId: Record<string, SegmentsResponse> = {};
  for (const resp of segments) {
    if (resp.revision !== songs.revision) {
      throw new RevisionMismatchError(songs.revision, resp.revision,
                                      `segments for ${resp.song_id}`);
    }
    byId[resp.song_id] = resp;
  }
  if (classes.revision !== songs.revision) {
    throw new RevisionMismatchError(songs.revision, classes.revision, "class set");
  }
  return {
    revision: songs.revision,
    songs: songs.songs,
    segments: byId,
    classIds: classes.classes.map((c) => c.id),
    draft: draftFromClasses(classes),
    playback: null,
    rescoreBusy: false,
    notice: null,
    lastDiff: null,
  };
}

/** All predictions in the loaded catalog, keyed "<song_id>:<index>". */
export function predictionMap(
  segments: Record<string, SegmentsResponse>,
): Record<string, string> {
  const out: Record<string, string> = {};
  for (const resp of Object.values(segments)) {
    for (const seg of resp.segments) {
      if (seg.predicted !== undefined) {
        out[segmentKey(resp.song_id, seg.index)] = seg.predicted;
      }
    }
  }
  return out;
}

/** Keys whose predicted class changed, sorted — mirrors the service diff. */
export function computeDiff(
  before: Record<string, string>,
  after: Record<string, string>,
): Diff {
  const changedKeys = Object.keys(after)
    .filter((key) => before[key] !== after[key])
    .sort();
  return { changedCount: changedKeys.length, changedKeys };
}

export function reconcileDiff(clientDiff: Diff, serviceCount: number): DiffReport {
  return {
    ...clientDiff,
    serviceCount,
    consistent: clientDiff.changedCount === serviceCount,
  };
}

/** Segments ranked for one class, highest probability first. */
export function rankForClass(vm: ViewModel, classId: string): RankedSegment[] {
  const column = vm.classIds.indexOf(classId);
  if (column < 0) {
    return [];
  }
  const names: Record<string, string> = {};
  for (const song of vm.songs) {
    names[song.song_id] = song.name;
  }
  const ranked: RankedSegment[] = [];
  for (const resp of Object.values(vm.segments)) {
    for (const seg of resp.segments) {
      const prob = seg.probs?.[column];
      if (prob === undefined || seg.predicted === undefined) {
        continue;
      }
      ranked.push({
        songId: resp.song_id,
        songName: names[resp.song_id] ?? resp.song_id,
        index: seg.index,
        start: seg.start,
        end: seg.end,
        prob,
        predicted: seg.predicted,
        nonMusic: seg.non_music,
      });
    }
  }
  ranked.sort((a, b) =>
    b.prob - a.prob
    || a.songName.localeCompare(b.songName)
    || a.index - b.index);
  return ranked;
}

// ------------------------------------------------------------------- draft

export function draftFromClasses(classes: ClassesResponse): Draft {
  return {
    logitScale: classes.logit_scale,
    classes: classes.classes.map((c) => ({
      id: c.id,
      displayName: c.display_name,
      promptText: c.prompts.join("\n"),
      error: null,
    })),
    dirty: false,
  };
}

export function setPromptText(draft: Draft, classId: string, text: string): Draft {
  return {
    ...draft,
    dirty: true,
    classes: draft.classes.map((c) =>
      c.id === classId ? { ...c, promptText: text, error: null } : c),
  };
}

export function promptLines(text: string): string[] {
  return text
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
}

/** Client-side validation; returns the draft with per-class errors set. */
export function validateDraft(draft: Draft): Draft {
  return {
    ...draft,
    classes: draft.classes.map((c) => ({
      ...c,
      error: promptLines(c.promptText).length === 0
        ? "at least one prompt is required"
        : null,
    })),
  };
}

export function draftValid(draft: Draft): boolean {
  return draft.classes.every((c) => c.error === null)
    && draft.classes.length >= 2;
}

export function draftToPayload(draft: Draft) {
  return {
    logit_scale: draft.logitScale,
    classes: draft.classes.map((c) => ({
      id: c.id,
      display_name: c.displayName,
      prompts: promptLines(c.promptText),
    })),
  };
}

/** Attach 422 errors from the service to the offending draft classes. */
export function applyServerErrors(draft: Draft, errors: ClassError[]): Draft {
  const byClass: Record<string, string> = {};
  for (const err of errors) {
    byClass[err.class_id] = err.error;
  }
  return {
    ...draft,
    classes: draft.classes.map((c) =>
      byClass[c.id] !== undefined ? { ...c, error: byClass[c.id]! } : c),
  };
}

// ---------------------------------------------------------------- playback

export function withPlayback(vm: ViewModel, playback: Playback | null): ViewModel {
  return { ...vm, playback };
}
