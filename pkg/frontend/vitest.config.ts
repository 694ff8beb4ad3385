import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // Every binding call spawns the CLI (~0.25 s of interpreter startup),
    // and the parity suite makes a few hundred such calls.
    testTimeout: 180_000,
    hookTimeout: 60_000,
  },
});
