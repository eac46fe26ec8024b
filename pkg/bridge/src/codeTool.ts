/**
 * Budgeted execution of <python> tool calls. Scripts run in an isolated
 * interpreter (`python3 -I`, empty environment) with address-space and
 * CPU-time limits applied before the user code starts.
 */

import { spawnSync } from "node:child_process";

export class BudgetError extends Error {}
export class SandboxError extends Error {}

export class ToolBudget {
  private used = 0;

  /** maxCalls may be Infinity for an unlimited budget */
  constructor(readonly maxCalls: number) {
    if (Number.isNaN(maxCalls) || maxCalls < 0) {
      throw new RangeError("maxCalls must be a non-negative count");
    }
  }

  get callsUsed(): number {
    return this.used;
  }

  get remaining(): number {
    return this.maxCalls - this.used;
  }

  consume(): void {
    if (this.used >= this.maxCalls) {
      throw new BudgetError(
        this.maxCalls === 0
          ? "code execution is not available in this session"
          : `code budget of ${this.maxCalls} calls is exhausted`,
      );
    }
    this.used += 1;
  }
}

export interface SandboxLimits {
  timeoutMs: number;
  memoryMb: number;
}

export const DEFAULT_LIMITS: SandboxLimits = { timeoutMs: 10_000, memoryMb: 512 };

const LIMIT_PREAMBLE = (memoryMb: number, cpuSeconds: number) =>
  [
    "import resource",
    `_mem = ${memoryMb} * 1024 * 1024`,
    "resource.setrlimit(resource.RLIMIT_AS, (_mem, _mem))",
    `resource.setrlimit(resource.RLIMIT_CPU, (${cpuSeconds}, ${cpuSeconds}))`,
    "del resource, _mem",
  ].join("\n");

/**
 * Runs one tool call, consuming budget first. Returns captured stdout
 * (plus stderr when the script fails, so the model sees tracebacks).
 */
export function executeCode(
  source: string,
  budget: ToolBudget,
  limits: SandboxLimits = DEFAULT_LIMITS,
  pythonBin = "python3",
): string {
  budget.consume();
  const cpuSeconds = Math.max(1, Math.ceil(limits.timeoutMs / 1000));
  const script = `${LIMIT_PREAMBLE(limits.memoryMb, cpuSeconds)}\n${source}`;
  const run = spawnSync(pythonBin, ["-I", "-c", script], {
    encoding: "utf-8",
    timeout: limits.timeoutMs,
    // PATH only, so the interpreter can be found but no secrets leak in
    env: { PATH: process.env.PATH ?? "" },
    input: "",
  });
  if (run.error) {
    const err = run.error as NodeJS.ErrnoException;
    if (err.code === "ETIMEDOUT") {
      throw new SandboxError(
        `execution exceeded the ${limits.timeoutMs} ms time limit`,
      );
    }
    throw new SandboxError(`sandbox failure: ${err.message}`);
  }
  if (run.signal === "SIGKILL" || run.signal === "SIGXCPU") {
    throw new SandboxError(
      `execution exceeded the ${limits.timeoutMs} ms time limit`,
    );
  }
  if (run.status !== 0) {
    return `${run.stdout}${run.stderr}`.trim();
  }
  return run.stdout.trimEnd();
}
