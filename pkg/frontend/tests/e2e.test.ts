// Full-stack pass: boots the real chat service in scripted mode and drives
// the DOM app against it over live HTTP.

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { createServer, type AddressInfo } from "node:net";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { createApp, type AppHandle } from "../src/app";

// vitest runs with the frontend directory as cwd; the service lives one up.
const REPO_ROOT = resolve(process.cwd(), "..");
const SCENARIO = join(
  REPO_ROOT,
  "src",
  "chacha",
  "assets",
  "scenarios",
  "positive_event.json",
);

// Eight user lines and the phase each scripted reply lands in.
const WALK: Array<[string, string]> = [
  ["어제 가족이랑 놀이공원에 가서 롤러코스터를 탔어!", "label"],
  ["정말 신나고 기분이 좋았어!", "label"],
  ["맞아! 타고 나니까 정말 뿌듯했어", "label"],
  ["응, 내가 용감해진 것 같아서 기분이 최고였어", "record"],
  ["아니, 일기는 안 써", "record"],
  ["오, 좋아! 오늘 밤에 써 볼게", "share"],
  ["아직 안 했는데 저녁에 말할래", "share"],
  ["아니, 오늘은 이만 할래. 고마워!", "share"],
];

let workDir: string;
let server: ChildProcessWithoutNullStreams;
let serverLog = "";
let base: string;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const port = (probe.address() as AddressInfo).port;
      probe.close(() => resolve(port));
    });
  });
}

async function waitFor(
  check: () => boolean,
  what: string,
  timeout = 20000,
): Promise<void> {
  const start = Date.now();
  while (!check()) {
    if (Date.now() - start > timeout) {
      throw new Error(`timed out waiting for ${what}\nserver log:\n${serverLog}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
}

beforeAll(async () => {
  expect(typeof fetch).toBe("function");
  const port = await freePort();
  base = `http://127.0.0.1:${port}`;
  workDir = mkdtempSync(join(tmpdir(), "chacha-web-e2e-"));
  const config = join(workDir, "config.toml");
  writeFileSync(
    config,
    [
      "[gateway.generator]",
      'model_id = "scripted-generator"',
      "",
      "[gateway.analyzer]",
      'model_id = "scripted-analyzer"',
      "",
      "[service]",
      'locale = "ko"',
      `data_dir = "${join(workDir, "data")}"`,
      "",
      "[scripted]",
      `scenario_path = "${SCENARIO}"`,
      "",
    ].join("\n"),
  );
  server = spawn("chacha-server", ["--config", config, "--port", String(port)]);
  server.stdout.on("data", (chunk: Buffer) => (serverLog += chunk.toString()));
  server.stderr.on("data", (chunk: Buffer) => (serverLog += chunk.toString()));

  let up = false;
  const deadline = Date.now() + 30000;
  while (!up && Date.now() < deadline) {
    try {
      const probe = await fetch(`${base}/sessions/warmup-probe`);
      up = probe.status === 404;
    } catch {
      await new Promise((resolve) => setTimeout(resolve, 150));
    }
  }
  if (!up) {
    throw new Error(`service never came up\nserver log:\n${serverLog}`);
  }
});

afterAll(() => {
  server?.kill("SIGTERM");
  if (workDir) rmSync(workDir, { recursive: true, force: true });
});

describe("scripted happy path over live HTTP", () => {
  let app: AppHandle;
  let sessionId: string;

  function $(selector: string): HTMLElement {
    return document.querySelector(selector) as HTMLElement;
  }

  async function say(text: string): Promise<void> {
    const input = $("#message-input") as HTMLTextAreaElement;
    const before = app.state().messages.length;
    input.value = text;
    ($("#send") as HTMLButtonElement).click();
    await waitFor(
      () => !app.state().pending && app.state().messages.length === before + 2,
      `reply to "${text}"`,
    );
  }

  it("walks a whole session through the UI", async () => {
    document.body.innerHTML = "";
    const root = document.createElement("div");
    document.body.appendChild(root);
    app = createApp(root, { apiBase: base, path: "/", navigate: () => {} });

    ($("#entry-name") as HTMLInputElement).value = "지민";
    ($("#entry-age") as HTMLInputElement).value = "9";
    ($("#start") as HTMLButtonElement).click();
    await waitFor(() => app.state().screen === "chat", "session create");

    sessionId = app.state().sessionId as string;
    expect(sessionId).toBeTruthy();
    expect(document.querySelectorAll(".bubble").length).toBe(1);
    expect($("#stream").textContent).toContain("안녕");

    for (const [line, phase] of WALK) {
      await say(line);
      const messages = app.state().messages;
      const newest = messages[messages.length - 1];
      expect(newest.role).toBe("system");
      expect(newest.phase).toBe(phase);
      expect(newest.content.length).toBeGreaterThan(0);
    }

    expect(app.state().ended).toBe(true);
    expect($("#notice").dataset.kind).toBe("ended");
    expect(($("#message-input") as HTMLTextAreaElement).disabled).toBe(true);
    expect(($("#send") as HTMLButtonElement).disabled).toBe(true);
    expect(document.querySelectorAll(".bubble").length).toBe(17);
    expect($("#phase-badge").textContent).toBe("share");
  });

  it("resumes the finished transcript read-only", async () => {
    document.body.innerHTML = "";
    const root = document.createElement("div");
    document.body.appendChild(root);
    const reopened = createApp(root, {
      apiBase: base,
      path: `/chat/${sessionId}`,
      navigate: () => {},
    });
    await reopened.ready;

    expect(reopened.state().screen).toBe("chat");
    expect(document.querySelectorAll(".bubble").length).toBe(17);
    expect($("#notice").dataset.kind).toBe("ended");
    expect(($("#message-input") as HTMLTextAreaElement).disabled).toBe(true);
  });
});
