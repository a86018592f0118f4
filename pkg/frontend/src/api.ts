// Typed client for the chat service; the only backend contact in the app.

export interface TurnAttachments {
  picker_shown?: boolean;
  picker_emotions?: PickerEmotion[];
  picked_emotion_ids?: string[];
}

export interface ApiMessage {
  index: number;
  role: "user" | "system";
  content: string;
  phase: string;
  attachments: TurnAttachments | null;
  timestamp: string;
  pending: boolean;
}

export interface PickerEmotion {
  id: string;
  label: string;
  emoji: string;
}

export interface PickerPayload {
  picker_shown: boolean;
  emotions: PickerEmotion[];
}

export interface CreateResponse {
  session_id: string;
  phase: string;
  messages: ApiMessage[];
}

export interface MessageResponse {
  messages: ApiMessage[];
  phase: string;
  picker: PickerPayload | null;
  session_ended: boolean;
}

export interface SessionDetail {
  session_id: string;
  phase: string;
  status: string;
  locale: string;
  created_at: string;
  messages: ApiMessage[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
    readonly retrySafe: boolean = false,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ChatApi {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (input, init) =>
      globalThis.fetch(input, init),
  ) {}

  createSession(name: string, age: number): Promise<CreateResponse> {
    return this.request("POST", "/sessions", { name, age });
  }

  sendMessage(
    sessionId: string,
    text: string,
    pickedEmotionIds?: string[],
  ): Promise<MessageResponse> {
    const body: Record<string, unknown> = { text };
    if (pickedEmotionIds !== undefined) {
      // The chosen ids go out exactly as picked, no reordering or cleanup.
      body.picked_emotion_ids = pickedEmotionIds;
    }
    return this.request(
      "POST",
      `/sessions/${encodeURIComponent(sessionId)}/messages`,
      body,
    );
  }

  getSession(sessionId: string): Promise<SessionDetail> {
    return this.request("GET", `/sessions/${encodeURIComponent(sessionId)}`);
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.base + path, init);
    let payload: Record<string, unknown> = {};
    try {
      payload = (await response.json()) as Record<string, unknown>;
    } catch {
      // Non-JSON error bodies fall through to the status-only error below.
    }
    if (!response.ok) {
      const detail =
        typeof payload.detail === "string"
          ? payload.detail
          : `request failed with status ${response.status}`;
      throw new ApiError(response.status, detail, payload.retry_safe === true);
    }
    return payload as T;
  }
}
