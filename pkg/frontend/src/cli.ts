/**
 * Subprocess plumbing for the `asql` CLI.
 *
 * Every command is a fresh short-lived process; there is no shared
 * state, so callers may run commands concurrently from workers.
 */
import { spawnSync } from "node:child_process";

import { AsqlError, ProtocolError, TransportError, errorFromCode } from "./errors.js";

/** Options accepted by every CLI-backed entry point. */
export interface CliOptions {
  /**
   * Command used to invoke the CLI, split into argv entries
   * (default: `$ASQL_BIN` split on whitespace, else `["asql"]`).
   */
  readonly bin?: readonly string[];
}

function resolveBin(options?: CliOptions): readonly string[] {
  if (options?.bin && options.bin.length > 0) {
    return options.bin;
  }
  const fromEnv = process.env.ASQL_BIN;
  if (fromEnv && fromEnv.trim().length > 0) {
    return fromEnv.trim().split(/\s+/);
  }
  return ["asql"];
}

/** Run one CLI command; returns stdout, throws mapped errors on failure. */
export function runCli(args: readonly string[], options?: CliOptions): string {
  const [command, ...prefix] = resolveBin(options);
  const result = spawnSync(command!, [...prefix, ...args], {
    encoding: "utf8",
    maxBuffer: 256 * 1024 * 1024,
  });
  if (result.error) {
    throw new TransportError(
      `failed to launch ${command}: ${result.error.message}`);
  }
  if (result.status !== 0) {
    throw cliFailure(result.stderr, result.status);
  }
  return result.stdout;
}

function cliFailure(stderr: string, status: number | null): AsqlError {
  const lines = stderr.split("\n").map((l) => l.trim()).filter(Boolean);
  const last = lines[lines.length - 1];
  if (last) {
    try {
      const parsed: unknown = JSON.parse(last);
      if (
        typeof parsed === "object" && parsed !== null &&
        typeof (parsed as { error?: unknown }).error === "string" &&
        typeof (parsed as { message?: unknown }).message === "string"
      ) {
        const { error, message } = parsed as { error: string; message: string };
        return errorFromCode(error, message);
      }
    } catch {
      // fall through to the protocol error below
    }
  }
  return new ProtocolError(
    `CLI exited with status ${status} and unparseable stderr: ` +
    JSON.stringify(stderr.slice(0, 500)),
  );
}
