/**
 * Wire-protocol client for the core session server. One JSON object per
 * line; the server speaks first with a briefing and answers every
 * request with exactly one reply. The bridge can spawn the server over
 * stdio or connect to a TCP listener.
 */

import { ChildProcess, spawn } from "node:child_process";
import { createConnection, Socket } from "node:net";

export interface WireMessage {
  type: string;
  session_id: string;
  round: number;
  payload: any;
}

export interface BriefingPayload {
  task_id: string;
  briefing: string;
  inputs: string[];
  outputs: string[];
  max_rounds: number;
  max_sets_per_round: number;
  noise_sigma: number;
}

export class WireError extends Error {}

class LineQueue {
  private buffer = "";
  private lines: string[] = [];
  private waiters: Array<{
    resolve: (line: string) => void;
    reject: (err: Error) => void;
  }> = [];
  private closed: Error | null = null;

  push(chunk: string): void {
    this.buffer += chunk;
    for (;;) {
      const idx = this.buffer.indexOf("\n");
      if (idx < 0) break;
      const line = this.buffer.slice(0, idx).trim();
      this.buffer = this.buffer.slice(idx + 1);
      if (line.length === 0) continue;
      const waiter = this.waiters.shift();
      if (waiter) {
        waiter.resolve(line);
      } else {
        this.lines.push(line);
      }
    }
  }

  close(reason: string): void {
    this.closed = new WireError(reason);
    for (const waiter of this.waiters.splice(0)) {
      waiter.reject(this.closed);
    }
  }

  next(): Promise<string> {
    const line = this.lines.shift();
    if (line !== undefined) {
      return Promise.resolve(line);
    }
    if (this.closed) {
      return Promise.reject(this.closed);
    }
    return new Promise((resolve, reject) => {
      this.waiters.push({ resolve, reject });
    });
  }
}

export interface SpawnOptions {
  taskId: string;
  noiseSigma?: number;
  seed?: number;
  maxRounds?: number;
  maxSets?: number;
  pythonBin?: string;
}

export class CoreSession {
  private constructor(
    private readonly writeLine: (line: string) => void,
    private readonly incoming: LineQueue,
    private readonly shutdown: () => void,
    readonly briefing: BriefingPayload,
  ) {}

  static async spawn(options: SpawnOptions): Promise<CoreSession> {
    const {
      taskId,
      noiseSigma = 0,
      seed = 0,
      maxRounds = 10,
      maxSets = 20,
      pythonBin = "python3",
    } = options;
    const child: ChildProcess = spawn(
      pythonBin,
      [
        "-m",
        "lawlab.cli",
        "serve",
        "--task",
        taskId,
        "--noise",
        String(noiseSigma),
        "--seed",
        String(seed),
        "--max-rounds",
        String(maxRounds),
        "--max-sets",
        String(maxSets),
      ],
      { stdio: ["pipe", "pipe", "pipe"] },
    );
    const incoming = new LineQueue();
    let stderr = "";
    child.stdout!.setEncoding("utf-8");
    child.stderr!.setEncoding("utf-8");
    child.stdout!.on("data", (chunk: string) => incoming.push(chunk));
    child.stderr!.on("data", (chunk: string) => {
      stderr += chunk;
    });
    child.on("close", () =>
      incoming.close(`core server exited${stderr ? `: ${stderr.trim()}` : ""}`),
    );
    const session = new CoreSession(
      (line) => child.stdin!.write(line + "\n"),
      incoming,
      () => child.kill(),
      await readBriefing(incoming),
    );
    return session;
  }

  static async connect(host: string, port: number): Promise<CoreSession> {
    const socket: Socket = await new Promise((resolve, reject) => {
      const sock = createConnection({ host, port }, () => resolve(sock));
      sock.once("error", reject);
    });
    socket.setEncoding("utf-8");
    const incoming = new LineQueue();
    socket.on("data", (chunk: string) => incoming.push(chunk));
    socket.on("close", () => incoming.close("connection closed"));
    return new CoreSession(
      (line) => socket.write(line + "\n"),
      incoming,
      () => socket.destroy(),
      await readBriefing(incoming),
    );
  }

  /** Sends one request and waits for the server's single reply. */
  async request(type: "run_experiment" | "final_law", payload: any): Promise<WireMessage> {
    this.writeLine(JSON.stringify({ type, payload }));
    return parseMessage(await this.incoming.next());
  }

  close(): void {
    this.shutdown();
  }
}

function parseMessage(line: string): WireMessage {
  let msg: any;
  try {
    msg = JSON.parse(line);
  } catch (err) {
    throw new WireError(`malformed server line: ${(err as Error).message}`);
  }
  if (typeof msg !== "object" || msg === null || typeof msg.type !== "string") {
    throw new WireError("server message is not a typed object");
  }
  return msg as WireMessage;
}

async function readBriefing(incoming: LineQueue): Promise<BriefingPayload> {
  const first = parseMessage(await incoming.next());
  if (first.type !== "briefing") {
    throw new WireError(`expected a briefing, got ${first.type}`);
  }
  return first.payload as BriefingPayload;
}
