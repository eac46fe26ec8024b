/**
 * Parsing of tagged agent messages. A well-formed turn carries exactly
 * one action: a <run_experiment> JSON array, a <python> script, or a
 * <final_law> function definition.
 */

export type AgentAction =
  | { kind: "run_experiment"; assignments: Array<Record<string, number>> }
  | { kind: "python"; source: string }
  | { kind: "final_law"; source: string };

export class TagError extends Error {
  constructor(
    readonly code:
      | "no-action"
      | "mixed-actions"
      | "duplicate-tags"
      | "bad-json"
      | "bad-payload",
    message: string,
  ) {
    super(message);
  }
}

const TAG_NAMES = ["run_experiment", "python", "final_law"] as const;

function extractBlocks(text: string, tag: string): string[] {
  const re = new RegExp(`<${tag}>([\\s\\S]*?)</${tag}>`, "g");
  const blocks: string[] = [];
  for (const match of text.matchAll(re)) {
    blocks.push(match[1]);
  }
  return blocks;
}

export function parseAgentMessage(text: string): AgentAction {
  const found: Array<{ tag: (typeof TAG_NAMES)[number]; blocks: string[] }> = [];
  for (const tag of TAG_NAMES) {
    const blocks = extractBlocks(text, tag);
    if (blocks.length > 0) {
      found.push({ tag, blocks });
    }
  }
  if (found.length === 0) {
    throw new TagError(
      "no-action",
      "no action tag found; respond with exactly one of " +
        "<run_experiment>, <python>, or <final_law>",
    );
  }
  if (found.length > 1) {
    throw new TagError(
      "mixed-actions",
      "NO MIXING: use exactly one action type per turn, got " +
        found.map((f) => f.tag).join(" + "),
    );
  }
  const { tag, blocks } = found[0];
  if (blocks.length > 1) {
    throw new TagError(
      "duplicate-tags",
      `NO DUPLICATES: found ${blocks.length} <${tag}> tags in one turn`,
    );
  }
  const body = blocks[0].trim();
  if (tag === "python") {
    return { kind: "python", source: body };
  }
  if (tag === "final_law") {
    return { kind: "final_law", source: body };
  }
  return { kind: "run_experiment", assignments: parseAssignments(body) };
}

function parseAssignments(body: string): Array<Record<string, number>> {
  let data: unknown;
  try {
    data = JSON.parse(body);
  } catch (err) {
    throw new TagError(
      "bad-json",
      `run_experiment body is not valid JSON: ${(err as Error).message}`,
    );
  }
  if (!Array.isArray(data) || data.length === 0) {
    throw new TagError(
      "bad-payload",
      "run_experiment body must be a non-empty JSON array of objects",
    );
  }
  const assignments: Array<Record<string, number>> = [];
  for (const [i, entry] of data.entries()) {
    if (typeof entry !== "object" || entry === null || Array.isArray(entry)) {
      throw new TagError("bad-payload", `set ${i} is not a JSON object`);
    }
    const row: Record<string, number> = {};
    for (const [key, value] of Object.entries(entry)) {
      if (typeof value !== "number" || !Number.isFinite(value)) {
        throw new TagError(
          "bad-payload",
          `set ${i}, input ${JSON.stringify(key)} is not a finite number`,
        );
      }
      row[key] = value;
    }
    assignments.push(row);
  }
  return assignments;
}
