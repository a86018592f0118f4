import { defineConfig } from "vite";

export default defineConfig({
  server: {
    // Dev-only passthrough to a locally running chacha-server.
    proxy: {
      "/sessions": "http://127.0.0.1:8000",
    },
  },
});
