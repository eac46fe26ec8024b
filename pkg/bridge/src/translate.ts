/**
 * Translation of a submitted `discovered_law` Python function into the
 * canonical expression text the core accepts. The transliteration is
 * deliberately restricted: straight-line bodies of imports, local
 * assignments, and a final return of an arithmetic expression. Anything
 * else is rejected so the model can correct itself. Every translation
 * is then verified numerically against the original function on seeded
 * sample points before it may be submitted.
 */

import { spawnSync } from "node:child_process";
import {
  evaluate,
  ExprNode,
  ExpressionError,
  freeNames,
  parseExpression,
  serializeExpression,
} from "./expressions.js";

export class TranslationError extends Error {}

export interface TranslatedLaw {
  expression: string;
  paramNames: string[];
}

const DEF_RE = /^def\s+discovered_law\s*\(([^)]*)\)\s*:\s*$/;
const IMPORT_RE = /^(?:import\s+(?:math|numpy)(?:\s+as\s+\w+)?|from\s+(?:math|numpy)\s+import\s+[\w\s,]+)$/;
const ASSIGN_RE = /^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+)$/;
const RETURN_RE = /^return\s+(.+)$/;

const FUNCTION_MAP: Record<string, string> = {
  exp: "exp",
  log: "log",
  sqrt: "sqrt",
  sin: "sin",
  cos: "cos",
  tan: "tan",
  asin: "asin",
  acos: "acos",
  atan: "atan",
  arcsin: "asin",
  arccos: "acos",
  arctan: "atan",
};

function pythonToCanonical(text: string): string {
  if (text.includes("#")) {
    throw new TranslationError("comments are not allowed in the law body");
  }
  let out = text.replace(/\*\*/g, "^");
  out = out.replace(
    /\b(?:math|np|numpy)\.([A-Za-z_][A-Za-z0-9_]*)/g,
    (_, attr: string) => {
      if (attr === "pi") {
        return `(${Math.PI})`;
      }
      if (attr === "e") {
        return `(${Math.E})`;
      }
      const mapped = FUNCTION_MAP[attr];
      if (mapped === undefined) {
        throw new TranslationError(`unsupported module attribute .${attr}`);
      }
      return mapped;
    },
  );
  // bare numpy spellings after `from numpy import arcsin` etc.
  out = out.replace(/\barc(sin|cos|tan)\b/g, "a$1");
  if (/[%:@\[\]{}<>=!]|\bif\b|\bfor\b|\bwhile\b|\blambda\b/.test(out)) {
    throw new TranslationError("unsupported construct in expression");
  }
  return out;
}

function substitute(node: ExprNode, env: Map<string, ExprNode>): ExprNode {
  switch (node.kind) {
    case "number":
      return node;
    case "name": {
      const bound = env.get(node.name);
      return bound !== undefined ? bound : node;
    }
    case "neg":
      return { kind: "neg", arg: substitute(node.arg, env) };
    case "unary":
      return { kind: "unary", fn: node.fn, arg: substitute(node.arg, env) };
    case "binary":
      return {
        kind: "binary",
        op: node.op,
        left: substitute(node.left, env),
        right: substitute(node.right, env),
      };
  }
}

/** Syntactic translation only; see translateFinalLaw for the checked path. */
export function transliterate(source: string): TranslatedLaw {
  const lines = source
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new TranslationError("empty final_law block");
  }
  const header = lines[0].match(DEF_RE);
  if (!header) {
    throw new TranslationError(
      "final_law must define a function named discovered_law",
    );
  }
  const paramNames = header[1]
    .split(",")
    .map((p) => p.trim())
    .filter((p) => p.length > 0);
  if (paramNames.length === 0) {
    throw new TranslationError("discovered_law must take at least one argument");
  }

  const env = new Map<string, ExprNode>();
  let returned: ExprNode | undefined;
  for (const line of lines.slice(1)) {
    if (returned !== undefined) {
      throw new TranslationError("statements after return are not allowed");
    }
    if (IMPORT_RE.test(line)) {
      continue;
    }
    const ret = line.match(RETURN_RE);
    if (ret) {
      returned = substitute(parseCanonical(ret[1]), env);
      continue;
    }
    const assign = line.match(ASSIGN_RE);
    if (assign && !assign[2].startsWith("=")) {
      const [, name, rhs] = assign;
      if (paramNames.includes(name)) {
        throw new TranslationError(`reassigning parameter ${name} is not allowed`);
      }
      env.set(name, substitute(parseCanonical(rhs), env));
      continue;
    }
    throw new TranslationError(`unsupported statement: ${line}`);
  }
  if (returned === undefined) {
    throw new TranslationError("discovered_law has no return statement");
  }
  for (const name of freeNames(returned)) {
    if (!paramNames.includes(name)) {
      throw new TranslationError(`unbound name ${name} in the law body`);
    }
  }
  return { expression: serializeExpression(returned), paramNames };
}

function parseCanonical(pythonExpr: string): ExprNode {
  try {
    return parseExpression(pythonToCanonical(pythonExpr));
  } catch (err) {
    if (err instanceof ExpressionError) {
      throw new TranslationError(err.message);
    }
    throw err;
  }
}

export interface RoundTripOptions {
  samples?: number;
  seed?: number;
  relTol?: number;
  pythonBin?: string;
  timeoutMs?: number;
}

// small deterministic PRNG so sample points are reproducible across runs
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function samplePoints(
  paramNames: string[],
  count: number,
  seed: number,
): Array<Record<string, number>> {
  const rand = mulberry32(seed);
  const points: Array<Record<string, number>> = [];
  for (let i = 0; i < count; i += 1) {
    const point: Record<string, number> = {};
    for (const name of paramNames) {
      // log-uniform over [1e-2, 1e2]: spans scales without overflowing
      point[name] = Math.pow(10, rand() * 4 - 2);
    }
    points.push(point);
  }
  return points;
}

function evaluateFunctionInPython(
  source: string,
  paramNames: string[],
  points: Array<Record<string, number>>,
  pythonBin: string,
  timeoutMs: number,
): Array<number | null> {
  const script = [
    "import json, math, sys",
    source,
    `points = json.loads(sys.stdin.read())`,
    "out = []",
    "for p in points:",
    `    try:`,
    `        v = discovered_law(${paramNames.map((n) => `p[${JSON.stringify(n)}]`).join(", ")})`,
    "        v = float(v)",
    "        out.append(v if math.isfinite(v) else None)",
    "    except Exception:",
    "        out.append(None)",
    "print(json.dumps(out))",
  ].join("\n");
  const run = spawnSync(pythonBin, ["-I", "-c", script], {
    input: JSON.stringify(points),
    encoding: "utf-8",
    timeout: timeoutMs,
    env: { PATH: process.env.PATH ?? "" },
  });
  if (run.error || run.status !== 0) {
    throw new TranslationError(
      `could not execute discovered_law: ${run.error?.message ?? run.stderr.trim()}`,
    );
  }
  return JSON.parse(run.stdout.trim()) as Array<number | null>;
}

/**
 * Full checked translation: transliterate, then require the canonical
 * text and the original function to agree on seeded samples.
 */
export function translateFinalLaw(
  source: string,
  options: RoundTripOptions = {},
): TranslatedLaw {
  const {
    samples = 100,
    seed = 1234,
    relTol = 1e-9,
    pythonBin = "python3",
    timeoutMs = 30_000,
  } = options;
  const translated = transliterate(source);
  const tree = parseExpression(translated.expression);
  const points = samplePoints(translated.paramNames, samples, seed);
  const reference = evaluateFunctionInPython(
    source,
    translated.paramNames,
    points,
    pythonBin,
    timeoutMs,
  );
  let compared = 0;
  for (let i = 0; i < points.length; i += 1) {
    const ours = evaluate(tree, points[i]);
    const theirs = reference[i];
    const oursDefined = Number.isFinite(ours);
    const theirsDefined = theirs !== null;
    if (!oursDefined && !theirsDefined) {
      continue;
    }
    if (oursDefined !== theirsDefined) {
      throw new TranslationError(
        `translation disagrees on definedness at sample ${i}`,
      );
    }
    const scale = Math.max(Math.abs(ours), Math.abs(theirs as number), 1e-300);
    if (Math.abs(ours - (theirs as number)) / scale >= relTol) {
      throw new TranslationError(
        `translation mismatch at sample ${i}: ${ours} vs ${theirs}`,
      );
    }
    compared += 1;
  }
  if (compared === 0) {
    throw new TranslationError("law is undefined on every sampled point");
  }
  return translated;
}
