import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    testTimeout: 20000,
    hookTimeout: 30000,
    // e2e spawns one server per file; keep files sequential
    fileParallelism: false,
  },
});
