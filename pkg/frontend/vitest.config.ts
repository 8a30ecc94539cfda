import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // integration tests spawn the python review service and wait for it
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
