import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    // The two-stage demo trains a real (tiny) model; the contract allows
    // up to 15 minutes for the whole run.
    testTimeout: 900_000,
    hookTimeout: 120_000,
  },
});
