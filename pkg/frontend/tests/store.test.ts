import { describe, expect, it } from "vitest";

import type { ApiMessage } from "../src/api";
import {
  initialState,
  inputEnabled,
  pickerFromMessages,
  toggleSelection,
  userTurnText,
} from "../src/store";

function turn(partial: Partial<ApiMessage>): ApiMessage {
  return {
    index: 0,
    role: "system",
    content: "",
    phase: "explore",
    attachments: null,
    timestamp: "2026-08-22T09:00:00+00:00",
    pending: false,
    ...partial,
  };
}

const PICKER_TURN = turn({
  index: 2,
  attachments: {
    picker_shown: true,
    picker_emotions: [
      { id: "joy", label: "신남", emoji: "😆" },
      { id: "sadness", label: "슬픔", emoji: "😢" },
      { id: "anger", label: "화남", emoji: "😠" },
    ],
  },
});

describe("inputEnabled", () => {
  it("requires the chat screen with nothing outstanding", () => {
    const state = initialState();
    expect(inputEnabled(state)).toBe(false);
    state.screen = "chat";
    expect(inputEnabled(state)).toBe(true);
    state.pending = true;
    expect(inputEnabled(state)).toBe(false);
    state.pending = false;
    state.ended = true;
    expect(inputEnabled(state)).toBe(false);
  });
});

describe("pickerFromMessages", () => {
  it("reads the directive off the newest system turn", () => {
    const picker = pickerFromMessages([turn({}), PICKER_TURN]);
    expect(picker).not.toBeNull();
    expect(picker!.emotions.map((e) => e.id)).toEqual([
      "joy",
      "sadness",
      "anger",
    ]);
    expect(picker!.selected).toEqual([]);
  });

  it("ignores directives that are not the newest message", () => {
    expect(pickerFromMessages([PICKER_TURN, turn({ index: 3 })])).toBeNull();
  });

  it("ignores user turns and plain system turns", () => {
    expect(pickerFromMessages([])).toBeNull();
    expect(pickerFromMessages([turn({ role: "user", content: "hi" })])).toBeNull();
    expect(pickerFromMessages([turn({ content: "안녕!" })])).toBeNull();
  });
});

describe("toggleSelection", () => {
  it("keeps first-picked-first order across toggles", () => {
    let picker = pickerFromMessages([PICKER_TURN])!;
    picker = toggleSelection(picker, "sadness");
    picker = toggleSelection(picker, "joy");
    expect(picker.selected).toEqual(["sadness", "joy"]);
    picker = toggleSelection(picker, "sadness");
    expect(picker.selected).toEqual(["joy"]);
    picker = toggleSelection(picker, "sadness");
    expect(picker.selected).toEqual(["joy", "sadness"]);
  });

  it("does not mutate the previous state", () => {
    const before = pickerFromMessages([PICKER_TURN])!;
    toggleSelection(before, "joy");
    expect(before.selected).toEqual([]);
  });
});

describe("userTurnText", () => {
  it("prefers typed text", () => {
    const messages = [turn({ role: "user", content: "롤러코스터 탔어" })];
    expect(userTurnText(messages, 0)).toBe("롤러코스터 탔어");
  });

  it("resolves picked ids against the nearest earlier directive", () => {
    const messages = [
      PICKER_TURN,
      turn({
        index: 3,
        role: "user",
        attachments: { picked_emotion_ids: ["anger", "joy"] },
      }),
    ];
    expect(userTurnText(messages, 1)).toBe("😠 화남, 😆 신남");
  });

  it("falls back to raw ids when no directive is in view", () => {
    const messages = [
      turn({
        role: "user",
        attachments: { picked_emotion_ids: ["joy", "mystery"] },
      }),
    ];
    expect(userTurnText(messages, 0)).toBe("joy, mystery");
  });

  it("keeps unknown ids verbatim next to resolved ones", () => {
    const messages = [
      PICKER_TURN,
      turn({
        index: 3,
        role: "user",
        attachments: { picked_emotion_ids: ["joy", "mystery"] },
      }),
    ];
    expect(userTurnText(messages, 1)).toBe("😆 신남, mystery");
  });

  it("returns empty text for an empty turn", () => {
    expect(userTurnText([turn({ role: "user" })], 0)).toBe("");
  });
});
