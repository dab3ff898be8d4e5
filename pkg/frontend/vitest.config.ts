import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    globalSetup: "./test/globalSetup.ts",
    // live and parity suites share one switch process and mutate its ledger,
    // so files must not interleave
    fileParallelism: false,
    testTimeout: 30_000,
    hookTimeout: 60_000,
  },
});
