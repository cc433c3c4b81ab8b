import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    environment: "node",
    testTimeout: 15_000,
    // the service round-trip file spawns one Python process; keep files
    // sequential so only one server is ever up
    fileParallelism: false,
  },
});
