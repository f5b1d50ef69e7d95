import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // the integration suite boots a real backend process
    testTimeout: 180_000,
    hookTimeout: 120_000,
  },
});
