/** Application shell: loads the catalog, owns the single mutable state
 * reference, routes between views via the location hash, and wires user
 * actions to API calls.  One rescore runs at a time, mirroring the
 * service's own lock.
 */

import { ApiError, Client, type PlotDataResponse } from "./api.js";
import {
  applyServerErrors,
  buildViewModel,
  computeDiff,
  draftToPayload,
  predictionMap,
  reconcileDiff,
  RevisionMismatchError,
  setPromptText,
  validateDraft,
  draftValid,
  type ViewModel,
} from "./model.js";
import {
  classView,
  libraryView,
  navBar,
  noticeBanner,
  playerBar,
  promptEditor,
  type Actions,
} from "./views.js";

const client = new Client();
const audio = document.createElement("audio");
audio.controls = true;

let vm: ViewModel | null = null;
let plots: Record<string, PlotDataResponse> = {};
let currentView = "library";
let currentClass: string | null = null;

function parseHash(): void {
  const hash = location.hash.replace(/^#\/?/, "");
  const [view, arg] = hash.split("/");
  if (view === "classes" || view === "prompts" || view === "library") {
    currentView = view;
  }
  if (view === "classes" && arg) {
    currentClass = decodeURIComponent(arg);
  }
}

async function loadAll(): Promise<void> {
  const songs = await client.songs();
  const segments = await Promise.all(
    songs.songs.map((s) => client.segments(s.song_id)));
  const classes = await client.classes();
  const next = buildViewModel(songs, segments, classes);
  if (vm) {
    // Keep ephemeral UI state across reloads within the session.
    next.playback = vm.playback;
    next.lastDiff = vm.lastDiff;
    if (vm.draft.dirty) {
      next.draft = vm.draft;
    }
  }
  vm = next;
  if (currentClass === null && vm.classIds.length > 0) {
    currentClass = vm.classIds[0]!;
  }
  plots = {};
  render();
  // Overlays stream in after the first paint; each one re-renders.
  for (const song of songs.songs) {
    client.plotData(song.song_id)
      .then((plot) => {
        if (vm && plot.revision === vm.revision) {
          plots[song.song_id] = plot;
          render();
        }
      })
      .catch(() => undefined);
  }
}

async function reloadWithRetry(): Promise<void> {
  for (let attempt = 0; attempt < 3; attempt++) {
    try {
      await loadAll();
      return;
    } catch (err) {
      if (!(err instanceof RevisionMismatchError)) {
        throw err;
      }
      // The catalog moved mid-load; fetch the new revision.
    }
  }
  throw new Error("catalog kept changing while loading; try again");
}

const actions: Actions = {
  play(songId, index) {
    if (!vm) {
      return;
    }
    vm = { ...vm, playback: { songId, index } };
    audio.src = client.segmentAudioUrl(songId, index);
    void audio.play().catch(() => undefined);
    render();
  },

  setPrompt(classId, text) {
    if (!vm) {
      return;
    }
    vm = { ...vm, draft: setPromptText(vm.draft, classId, text) };
    render();
  },

  async rescore() {
    if (!vm || vm.rescoreBusy) {
      return;
    }
    const draft = validateDraft(vm.draft);
    vm = { ...vm, draft };
    if (!draftValid(draft)) {
      render();
      return;
    }
    vm = { ...vm, rescoreBusy: true, notice: null };
    render();
    const before = predictionMap(vm.segments);
    try {
      await client.putClasses(draftToPayload(draft));
      const result = await client.rescore();
      await reloadWithRetry();
      if (!vm) {
        return;
      }
      const diff = computeDiff(before, predictionMap(vm.segments));
      vm = {
        ...vm,
        rescoreBusy: false,
        lastDiff: reconcileDiff(diff, result.changed_count),
        draft: { ...vm.draft, dirty: false },
      };
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        vm = {
          ...vm,
          rescoreBusy: false,
          draft: applyServerErrors(vm.draft, err.classErrors),
          notice: err.classErrors.length > 0 ? null : err.detail,
        };
      } else if (err instanceof ApiError && err.status === 409) {
        vm = { ...vm, rescoreBusy: false, notice: err.detail };
      } else {
        vm = {
          ...vm,
          rescoreBusy: false,
          notice: err instanceof Error ? err.message : String(err),
        };
      }
    }
    render();
  },

  selectClass(classId) {
    currentClass = classId;
    location.hash = `#/classes/${encodeURIComponent(classId)}`;
    render();
  },

  selectView(view) {
    currentView = view;
    location.hash = view === "classes" && currentClass
      ? `#/classes/${encodeURIComponent(currentClass)}`
      : `#/${view}`;
    render();
  },
};

function render(): void {
  const root = document.getElementById("app");
  if (!root || !vm) {
    return;
  }
  root.replaceChildren();
  root.appendChild(navBar(vm, currentView, actions));
  const banner = noticeBanner(vm);
  if (banner) {
    root.appendChild(banner);
  }
  if (currentView === "classes") {
    root.appendChild(classView(vm, currentClass, actions));
  } else if (currentView === "prompts") {
    root.appendChild(promptEditor(vm, actions));
  } else {
    root.appendChild(libraryView(vm, plots, actions));
  }
  root.appendChild(playerBar(vm, audio));
}

window.addEventListener("hashchange", () => {
  parseHash();
  render();
});

parseHash();
reloadWithRetry().catch((err) => {
  const root = document.getElementById("app");
  if (root) {
    root.textContent = `failed to load the catalog: ${
      err instanceof Error ? err.message : String(err)}`;
  }
});
