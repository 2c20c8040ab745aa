import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the flow test boots the real annotation service as a subprocess
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
