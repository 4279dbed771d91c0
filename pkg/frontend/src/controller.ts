/** Drives the fetch -> show -> submit -> fetch loop against the service.
    Rendering is injected so the loop is testable without a DOM. */

import { ApiError, SelectionApi, type Choice } from "./api.js";
import { initialState, reduce, type UiEvent, type UiState } from "./state.js";

export class SessionController {
  state: UiState = initialState;

  constructor(
    private readonly api: SelectionApi,
    private readonly render: (state: UiState) => void,
  ) {}

  private dispatch(event: UiEvent) {
    this.state = reduce(this.state, event);
    this.render(this.state);
  }

  async start(): Promise<void> {
    await this.refreshStatus();
    await this.fetchNext();
  }

  async refreshStatus(): Promise<void> {
    try {
      this.dispatch({ kind: "status", status: await this.api.status() });
    } catch {
      // progress display is best-effort; the pair flow reports real errors
    }
  }

  async fetchNext(): Promise<void> {
    try {
      const resp = await this.api.nextPair();
      if (resp.exhausted) {
        this.dispatch({ kind: "fetch_exhausted", complete: resp.complete });
      } else {
        this.dispatch({ kind: "fetch_ok", ticket: resp.ticket });
      }
    } catch (err) {
      const msg = err instanceof ApiError ? err.message : "network failure";
      this.dispatch({ kind: "fetch_error", message: msg });
    }
  }

  /** Handles a click or keyboard choice; no-ops unless a ticket is shown. */
  async choose(choice: Choice): Promise<void> {
    if (this.state.phase !== "showing" || this.state.ticket === null) {
      return;
    }
    const ticketId = this.state.ticket.ticket_id;
    this.dispatch({ kind: "choose", choice });
    try {
      const accepted = await this.api.submit(ticketId, choice);
      this.dispatch(accepted ? { kind: "submit_ok" } : { kind: "submit_conflict" });
    } catch (err) {
      const msg = err instanceof ApiError ? err.message : "network failure";
      this.dispatch({ kind: "submit_error", message: msg });
      return;
    }
    await this.refreshStatus();
    await this.fetchNext();
  }

  async retry(): Promise<void> {
    this.dispatch({ kind: "retry" });
    await this.fetchNext();
  }
}
