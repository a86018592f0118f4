// DOM layer: one skeleton built at startup, re-rendered from ViewState.
// The chat textarea has no key handling on purpose: Enter inserts a line
// break and only the Send button posts.

import {
  ApiError,
  ChatApi,
  type ApiMessage,
  type FetchLike,
  type MessageResponse,
} from "./api";
import { messageHtml } from "./markup";
import {
  initialState,
  inputEnabled,
  pickerFromMessages,
  toggleSelection,
  userTurnText,
  type ViewState,
} from "./store";

export interface AppOptions {
  apiBase?: string;
  path?: string;
  fetchImpl?: FetchLike;
  navigate?: (path: string) => void;
}

export interface AppHandle {
  ready: Promise<void>;
  state: () => ViewState;
}

const COPY = {
  intro: "차차랑 오늘 있었던 일을 이야기해 볼까?",
  namePlaceholder: "이름",
  agePlaceholder: "나이",
  start: "시작하기",
  inputPlaceholder: "하고 싶은 말을 적어 봐",
  send: "보내기",
  pickerTitle: "지금 기분이랑 비슷한 걸 모두 골라 봐!",
  pickerConfirm: "골랐어요",
  nameRequired: "이름을 알려 줘!",
  ageRequired: "나이를 숫자로 알려 줘!",
  network: "서버에 연결하지 못했어요. 다시 시도해 주세요.",
  busy: "이 대화가 다른 곳에서 열려 있어요. 그쪽 창을 닫고 다시 보내 주세요.",
  retry: "메시지를 보내지 못했어요. 다시 한번 보내 볼까?",
  ended: "오늘 대화는 여기까지! 이야기해 줘서 고마워.",
  notFound: "그 대화를 찾을 수 없어요.",
} as const;

export function createApp(root: HTMLElement, options: AppOptions = {}): AppHandle {
  const api = new ChatApi(options.apiBase ?? "", options.fetchImpl);
  const navigate =
    options.navigate ??
    ((path: string) => history.pushState(null, "", path));
  const state = initialState();

  root.innerHTML = `
    <section id="entry">
      <h1>ChaCha</h1>
      <p class="intro">${COPY.intro}</p>
      <form id="entry-form">
        <input id="entry-name" autocomplete="off" placeholder="${COPY.namePlaceholder}">
        <input id="entry-age" type="number" min="1" max="120" placeholder="${COPY.agePlaceholder}">
        <button id="start" type="submit">${COPY.start}</button>
        <p id="entry-error" hidden></p>
      </form>
    </section>
    <section id="chat" hidden>
      <header id="chat-head">차차 <span id="phase-badge"></span></header>
      <p id="notice" hidden></p>
      <div id="stream"></div>
      <div id="picker" hidden>
        <p class="picker-title">${COPY.pickerTitle}</p>
        <div id="picker-grid"></div>
        <button id="picker-confirm" type="button">${COPY.pickerConfirm}</button>
      </div>
      <div id="composer">
        <textarea id="message-input" rows="3" placeholder="${COPY.inputPlaceholder}"></textarea>
        <button id="send" type="button">${COPY.send}</button>
      </div>
    </section>
  `;

  const el = {
    entry: root.querySelector("#entry") as HTMLElement,
    entryForm: root.querySelector("#entry-form") as HTMLFormElement,
    entryName: root.querySelector("#entry-name") as HTMLInputElement,
    entryAge: root.querySelector("#entry-age") as HTMLInputElement,
    entryError: root.querySelector("#entry-error") as HTMLElement,
    chat: root.querySelector("#chat") as HTMLElement,
    phaseBadge: root.querySelector("#phase-badge") as HTMLElement,
    notice: root.querySelector("#notice") as HTMLElement,
    stream: root.querySelector("#stream") as HTMLElement,
    picker: root.querySelector("#picker") as HTMLElement,
    pickerGrid: root.querySelector("#picker-grid") as HTMLElement,
    pickerConfirm: root.querySelector("#picker-confirm") as HTMLButtonElement,
    input: root.querySelector("#message-input") as HTMLTextAreaElement,
    send: root.querySelector("#send") as HTMLButtonElement,
  };

  function render(): void {
    el.entry.hidden = state.screen !== "entry";
    el.chat.hidden = state.screen !== "chat";

    el.stream.innerHTML = state.messages
      .map((turn, index) => {
        const text =
          turn.role === "user" ? userTurnText(state.messages, index) : turn.content;
        const pending = turn.pending ? " pending" : "";
        return (
          `<div class="bubble ${turn.role}${pending}" data-role="${turn.role}"` +
          ` data-index="${turn.index}">${messageHtml(text)}</div>`
        );
      })
      .join("");
    el.stream.scrollTop = el.stream.scrollHeight;

    const last = state.messages[state.messages.length - 1];
    el.phaseBadge.textContent = last ? last.phase : "";

    el.notice.hidden = state.notice === null;
    if (state.notice) {
      el.notice.textContent = state.notice.text;
      el.notice.dataset.kind = state.notice.kind;
    } else {
      delete el.notice.dataset.kind;
    }

    const enabled = inputEnabled(state);
    el.input.disabled = !enabled;
    el.send.disabled = !enabled;

    const picker = state.picker;
    el.picker.hidden = picker === null || state.ended;
    el.pickerGrid.textContent = "";
    if (picker) {
      for (const emotion of picker.emotions) {
        const option = document.createElement("button");
        option.type = "button";
        option.className = "picker-option";
        option.dataset.id = emotion.id;
        option.setAttribute(
          "aria-pressed",
          picker.selected.includes(emotion.id) ? "true" : "false",
        );
        option.textContent = `${emotion.emoji} ${emotion.label}`;
        option.addEventListener("click", () => {
          state.picker = toggleSelection(picker, emotion.id);
          render();
        });
        el.pickerGrid.appendChild(option);
      }
      el.pickerConfirm.disabled = !enabled || picker.selected.length === 0;
    }
  }

  function showEntryError(text: string): void {
    el.entryError.hidden = false;
    el.entryError.textContent = text;
  }

  async function startSession(): Promise<void> {
    const name = el.entryName.value.trim();
    const age = Number.parseInt(el.entryAge.value, 10);
    if (!name) {
      showEntryError(COPY.nameRequired);
      return;
    }
    if (!Number.isInteger(age) || age <= 0) {
      showEntryError(COPY.ageRequired);
      return;
    }
    el.entryError.hidden = true;
    try {
      const created = await api.createSession(name, age);
      state.screen = "chat";
      state.sessionId = created.session_id;
      state.messages = [...created.messages];
      navigate(`/chat/${created.session_id}`);
    } catch (error) {
      // Entry inputs keep their values; the child just tries again.
      showEntryError(error instanceof ApiError ? error.detail : COPY.network);
    }
    render();
  }

  function settle(optimistic: ApiMessage, response: MessageResponse): void {
    optimistic.pending = false;
    state.messages.push(...response.messages);
    state.picker = response.picker
      ? { emotions: response.picker.emotions, selected: [] }
      : null;
    if (response.session_ended) {
      state.ended = true;
      state.notice = { kind: "ended", text: COPY.ended };
    }
  }

  function rollback(optimistic: ApiMessage, error: unknown, draft: string): void {
    state.messages = state.messages.filter((turn) => turn !== optimistic);
    if (error instanceof ApiError && error.status === 409) {
      state.notice = { kind: "busy", text: COPY.busy };
      el.input.value = draft;
    } else if (error instanceof ApiError && error.status === 410) {
      state.ended = true;
      state.notice = { kind: "ended", text: COPY.ended };
    } else if (error instanceof ApiError && error.retrySafe) {
      state.notice = { kind: "retry", text: COPY.retry };
      el.input.value = draft;
    } else if (error instanceof ApiError) {
      state.notice = { kind: "bug", text: error.detail };
    } else {
      state.notice = { kind: "network", text: COPY.network };
      el.input.value = draft;
    }
  }

  async function deliver(
    text: string,
    picks: string[] | undefined,
    draft: string,
  ): Promise<void> {
    const sessionId = state.sessionId;
    if (sessionId === null) return;
    const last = state.messages[state.messages.length - 1];
    const optimistic: ApiMessage = {
      index: last ? last.index + 1 : 0,
      role: "user",
      content: text,
      phase: last ? last.phase : "explore",
      attachments: picks ? { picked_emotion_ids: picks } : null,
      timestamp: new Date().toISOString(),
      pending: true,
    };
    state.messages.push(optimistic);
    state.pending = true;
    state.notice = null;
    render();
    try {
      const response = await api.sendMessage(sessionId, text, picks);
      settle(optimistic, response);
    } catch (error) {
      rollback(optimistic, error, draft);
    }
    state.pending = false;
    render();
  }

  async function sendText(): Promise<void> {
    if (!inputEnabled(state)) return;
    const draft = el.input.value;
    if (!draft.trim()) return;
    el.input.value = "";
    await deliver(draft, undefined, draft);
  }

  async function submitPicks(): Promise<void> {
    if (!inputEnabled(state) || !state.picker) return;
    const picks = [...state.picker.selected];
    if (picks.length === 0) return;
    await deliver("", picks, "");
  }

  async function resume(sessionId: string): Promise<void> {
    try {
      const detail = await api.getSession(sessionId);
      state.screen = "chat";
      state.sessionId = detail.session_id;
      state.messages = [...detail.messages];
      state.ended = detail.status !== "active";
      state.picker = state.ended ? null : pickerFromMessages(detail.messages);
      if (state.ended) {
        state.notice = { kind: "ended", text: COPY.ended };
      }
    } catch (error) {
      showEntryError(
        error instanceof ApiError && error.status === 404
          ? COPY.notFound
          : error instanceof ApiError
            ? error.detail
            : COPY.network,
      );
    }
    render();
  }

  el.entryForm.addEventListener("submit", (event) => {
    event.preventDefault();
    void startSession();
  });
  el.send.addEventListener("click", () => void sendText());
  el.pickerConfirm.addEventListener("click", () => void submitPicks());

  const path = options.path ?? "/";
  const match = path.match(/^\/chat\/([^/]+)$/);
  const ready = match ? resume(decodeURIComponent(match[1])) : Promise.resolve();
  render();

  return { ready, state: () => state };
}
