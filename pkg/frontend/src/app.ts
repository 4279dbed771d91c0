/** DOM wiring: renders the state machine into the page and maps clicks and
    keyboard shortcuts (ArrowLeft/ArrowRight or 1/2) to choices. */

import { SelectionApi, type Choice } from "./api.js";
import { SessionController } from "./controller.js";
import { renderTranscript } from "./pseudowords.js";
import type { UiState } from "./state.js";

interface Elements {
  left: HTMLButtonElement;
  right: HTMLButtonElement;
  statusLine: HTMLElement;
  progressFill: HTMLElement;
  progressText: HTMLElement;
  notice: HTMLElement;
  retry: HTMLButtonElement;
}

function grab(doc: Document): Elements {
  const get = (id: string) => {
    const el = doc.getElementById(id);
    if (!el) {
      throw new Error(`missing element #${id}`);
    }
    return el;
  };
  return {
    left: get("choice-left") as HTMLButtonElement,
    right: get("choice-right") as HTMLButtonElement,
    statusLine: get("status-line"),
    progressFill: get("progress-fill"),
    progressText: get("progress-text"),
    notice: get("notice"),
    retry: get("retry") as HTMLButtonElement,
  };
}

export function renderInto(els: Elements): (state: UiState) => void {
  return (state) => {
    const showing = state.phase === "showing" && state.ticket !== null;
    els.left.disabled = !showing;
    els.right.disabled = !showing;
    if (showing && state.ticket) {
      els.left.textContent = renderTranscript(state.ticket.transcript1);
      els.right.textContent = renderTranscript(state.ticket.transcript2);
    } else if (state.phase === "done") {
      els.left.textContent = "";
      els.right.textContent = "";
    }
    const phaseText: Record<string, string> = {
      loading: "fetching next pair...",
      showing: "pick the better transcript",
      submitting: "submitting...",
      done: "session complete",
      error: "connection trouble",
    };
    els.statusLine.textContent = phaseText[state.phase];
    if (state.progress) {
      const { answered, total } = state.progress;
      const pct = total > 0 ? Math.round((100 * answered) / total) : 0;
      els.progressFill.style.width = `${pct}%`;
      els.progressText.textContent = `${answered} / ${total}`;
    }
    els.notice.textContent = state.notice ?? "";
    els.retry.hidden = state.phase !== "error";
  };
}

export function mount(doc: Document, api?: SelectionApi): SessionController {
  const els = grab(doc);
  const controller = new SessionController(api ?? new SelectionApi(), renderInto(els));

  const choose = (choice: Choice) => void controller.choose(choice);
  els.left.addEventListener("click", () => choose("left"));
  els.right.addEventListener("click", () => choose("right"));
  els.retry.addEventListener("click", () => void controller.retry());
  doc.addEventListener("keydown", (event) => {
    const key = (event as KeyboardEvent).key;
    if (key === "ArrowLeft" || key === "1") {
      choose("left");
    } else if (key === "ArrowRight" || key === "2") {
      choose("right");
    }
  });

  void controller.start();
  return controller;
}

declare global {
  interface Window {
    hypselNoAutoMount?: boolean;
  }
}

function autoMount() {
  if (!window.hypselNoAutoMount && document.getElementById("choice-left")) {
    mount(document);
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  if (document.readyState === "loading") {
    document.addEventListener("DOMContentLoaded", autoMount);
  } else {
    autoMount();
  }
}
