/** Typed client for the selection service JSON API. */

export interface PairTicket {
  ticket_id: string;
  utterance_id: string;
  stage: number;
  transcript1: number[];
  transcript2: number[];
  issued_at: number;
}

export type PairResponse =
  | { exhausted: false; ticket: PairTicket }
  | { exhausted: true; complete: boolean };

export interface SessionInfo {
  stage: number;
  total_pairs: number;
  lease_seconds: number;
}

export interface StatusInfo {
  stage: number;
  total: number;
  answered: number;
  pending: number;
  unserved: number;
  remaining: number;
  complete: boolean;
}

export type Choice = "left" | "right";

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

function isWordList(x: unknown): x is number[] {
  return Array.isArray(x) && x.every((w) => typeof w === "number");
}

export function parsePairResponse(data: unknown): PairResponse {
  const d = data as Record<string, unknown>;
  if (!d || typeof d.exhausted !== "boolean") {
    throw new ApiError("malformed pair response", 0);
  }
  if (d.exhausted) {
    return { exhausted: true, complete: Boolean(d.complete) };
  }
  const t = d.ticket as Record<string, unknown> | undefined;
  if (
    !t ||
    typeof t.ticket_id !== "string" ||
    typeof t.utterance_id !== "string" ||
    typeof t.stage !== "number" ||
    !isWordList(t.transcript1) ||
    !isWordList(t.transcript2)
  ) {
    throw new ApiError("malformed ticket payload", 0);
  }
  return {
    exhausted: false,
    ticket: {
      ticket_id: t.ticket_id,
      utterance_id: t.utterance_id,
      stage: t.stage,
      transcript1: t.transcript1,
      transcript2: t.transcript2,
      issued_at: typeof t.issued_at === "number" ? t.issued_at : 0,
    },
  };
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class SelectionApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async get(path: string): Promise<unknown> {
    const resp = await this.fetchImpl(this.baseUrl + path);
    if (!resp.ok) {
      throw new ApiError(`GET ${path} failed (${resp.status})`, resp.status);
    }
    return resp.json();
  }

  async session(): Promise<SessionInfo> {
    return (await this.get("/api/session")) as SessionInfo;
  }

  async nextPair(): Promise<PairResponse> {
    return parsePairResponse(await this.get("/api/pair"));
  }

  async status(): Promise<StatusInfo> {
    return (await this.get("/api/status")) as StatusInfo;
  }

  /** Resolves true on ack; false when the ticket was already answered
      elsewhere (conflict), which callers should skip past silently. */
  async submit(ticketId: string, choice: Choice): Promise<boolean> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/api/pair/${encodeURIComponent(ticketId)}/selection`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ choice }),
      },
    );
    if (resp.status === 409) {
      return false;
    }
    if (!resp.ok) {
      throw new ApiError(`submit failed (${resp.status})`, resp.status);
    }
    return true;
  }
}
