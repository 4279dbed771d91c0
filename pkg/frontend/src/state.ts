/** Pure UI state machine: one active ticket per tab, input disabled between
    submit and the next fetch, no selection logic client-side. */

import type { Choice, PairTicket, StatusInfo } from "./api.js";

export type Phase = "loading" | "showing" | "submitting" | "done" | "error";

export interface UiState {
  phase: Phase;
  ticket: PairTicket | null;
  progress: { answered: number; total: number } | null;
  notice: string | null;
}

export const initialState: UiState = {
  phase: "loading",
  ticket: null,
  progress: null,
  notice: null,
};

export type UiEvent =
  | { kind: "fetch_ok"; ticket: PairTicket }
  | { kind: "fetch_exhausted"; complete: boolean }
  | { kind: "fetch_error"; message: string }
  | { kind: "choose"; choice: Choice }
  | { kind: "submit_ok" }
  | { kind: "submit_conflict" }
  | { kind: "submit_error"; message: string }
  | { kind: "status"; status: StatusInfo }
  | { kind: "retry" };

export function reduce(state: UiState, event: UiEvent): UiState {
  switch (event.kind) {
    case "fetch_ok":
      return { ...state, phase: "showing", ticket: event.ticket, notice: null };
    case "fetch_exhausted":
      return {
        ...state,
        phase: "done",
        ticket: null,
        notice: event.complete ? "all pairs answered" : "waiting for other annotators",
      };
    case "fetch_error":
      // keep whatever was on screen; the retry banner references it
      return { ...state, phase: "error", notice: event.message };
    case "choose":
      // a choice is only submittable while a ticket is shown; duplicate
      // clicks while submitting are ignored here
      if (state.phase !== "showing" || state.ticket === null) {
        return state;
      }
      return { ...state, phase: "submitting" };
    case "submit_ok":
      return {
        ...state,
        phase: "loading",
        ticket: null,
        progress: state.progress
          ? { ...state.progress, answered: state.progress.answered + 1 }
          : null,
      };
    case "submit_conflict":
      // someone else answered this ticket first: skip forward with a notice
      return {
        ...state,
        phase: "loading",
        ticket: null,
        notice: "pair was already answered elsewhere; skipping",
      };
    case "submit_error":
      return { ...state, phase: "error", notice: event.message };
    case "status":
      return {
        ...state,
        progress: { answered: event.status.answered, total: event.status.total },
      };
    case "retry":
      return { ...state, phase: "loading", notice: null };
  }
}

/** The side a given event would submit, or null when input is disabled. */
export function submittableChoice(state: UiState, choice: Choice): Choice | null {
  return state.phase === "showing" && state.ticket !== null ? choice : null;
}
