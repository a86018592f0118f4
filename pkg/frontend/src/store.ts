// View state and its pure helpers; the DOM layer renders from this alone.

import type { ApiMessage, PickerEmotion } from "./api";

export type Screen = "entry" | "chat";

export type NoticeKind = "busy" | "retry" | "ended" | "network" | "bug";

export interface Notice {
  kind: NoticeKind;
  text: string;
}

export interface PickerState {
  emotions: PickerEmotion[];
  selected: string[];
}

export interface ViewState {
  screen: Screen;
  sessionId: string | null;
  messages: ApiMessage[];
  // True while a POST is outstanding; the composer and picker lock on it.
  pending: boolean;
  ended: boolean;
  picker: PickerState | null;
  notice: Notice | null;
}

export function initialState(): ViewState {
  return {
    screen: "entry",
    sessionId: null,
    messages: [],
    pending: false,
    ended: false,
    picker: null,
    notice: null,
  };
}

export function inputEnabled(state: ViewState): boolean {
  return state.screen === "chat" && !state.pending && !state.ended;
}

/** Picker carried by the newest message, when that message is a system turn. */
export function pickerFromMessages(messages: ApiMessage[]): PickerState | null {
  const last = messages[messages.length - 1];
  if (!last || last.role !== "system") return null;
  const attachments = last.attachments;
  if (!attachments?.picker_shown || !attachments.picker_emotions) return null;
  return { emotions: attachments.picker_emotions, selected: [] };
}

/** Toggle one id in or out, keeping first-picked-first order. */
export function toggleSelection(picker: PickerState, id: string): PickerState {
  const selected = picker.selected.includes(id)
    ? picker.selected.filter((existing) => existing !== id)
    : [...picker.selected, id];
  return { ...picker, selected };
}

/**
 * Display text for a user turn: typed text, or the picked emotions resolved
 * against the nearest earlier picker directive (ids when none is in view).
 */
export function userTurnText(messages: ApiMessage[], index: number): string {
  const turn = messages[index];
  if (turn.content) return turn.content;
  const picked = turn.attachments?.picked_emotion_ids ?? [];
  if (picked.length === 0) return "";
  for (let i = index - 1; i >= 0; i--) {
    const emotions = messages[i].attachments?.picker_emotions;
    if (emotions) {
      const byId = new Map(emotions.map((e) => [e.id, e]));
      return picked
        .map((id) => {
          const entry = byId.get(id);
          return entry ? `${entry.emoji} ${entry.label}` : id;
        })
        .join(", ");
    }
  }
  return picked.join(", ");
}
