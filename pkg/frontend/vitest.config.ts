import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // e2e suites spawn a Python server process per scenario
    testTimeout: 30000,
    hookTimeout: 30000,
  },
});
