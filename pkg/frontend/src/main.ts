import { createApp } from "./app";

const root = document.querySelector("#app");
if (root instanceof HTMLElement) {
  createApp(root, { path: location.pathname });
}
