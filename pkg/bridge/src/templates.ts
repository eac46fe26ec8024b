/**
 * Prompt assembly from the template files shipped under templates/.
 * Rendering is a pure string substitution so the same slot values
 * always reproduce the same bytes.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const TEMPLATE_DIR = join(
  dirname(fileURLToPath(import.meta.url)),
  "..",
  "templates",
);

export class TemplateError extends Error {}

export interface PromptBundle {
  /** code-assisted variant is used iff the tool budget allows any calls */
  codeAssisted: boolean;
  noisy: boolean;
  briefing: string;
  functionSignature: string;
  returnDescription: string;
  example: string;
}

const SLOT_RE = /\{([a-z_]+)\}/g;

export function loadTemplate(name: string): string {
  return readFileSync(join(TEMPLATE_DIR, `${name}.txt`), "utf-8");
}

export function renderTemplate(
  template: string,
  slots: Record<string, string>,
): string {
  const rendered = template.replace(SLOT_RE, (_, key: string) => {
    const value = slots[key];
    if (value === undefined) {
      throw new TemplateError(`missing slot {${key}}`);
    }
    return value;
  });
  const leftover = rendered.match(SLOT_RE);
  if (leftover) {
    throw new TemplateError(`unfilled placeholder ${leftover[0]}`);
  }
  return rendered;
}

export function buildSystemPrompt(bundle: PromptBundle): string {
  if (!bundle.codeAssisted) {
    return loadTemplate("system-vanilla");
  }
  return (
    loadTemplate("system-code").trimEnd() +
    "\n\n" +
    loadTemplate("system-code-protocol")
  );
}

export function buildUserPrompt(bundle: PromptBundle): string {
  const instruction = loadTemplate(
    bundle.noisy ? "run-experiment-noisy" : "run-experiment-noise-free",
  );
  const submission = renderTemplate(loadTemplate("submission-requirements"), {
    function_signature: bundle.functionSignature,
    return_description: bundle.returnDescription,
    example: bundle.example,
  });
  return [bundle.briefing.trimEnd(), instruction.trimEnd(), submission.trimEnd()].join(
    "\n\n",
  );
}
