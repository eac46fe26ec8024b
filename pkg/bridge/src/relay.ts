/**
 * The relay loop: prompts a provider model, parses its tagged actions,
 * forwards experiments to the core session, hosts the budgeted code
 * tool, and translates the final law function into canonical text. The
 * bridge itself never computes physics; every observation comes from
 * the core over the wire.
 */

import { CoreSession, WireMessage } from "./client.js";
import {
  BudgetError,
  DEFAULT_LIMITS,
  executeCode,
  SandboxError,
  SandboxLimits,
  ToolBudget,
} from "./codeTool.js";
import { AgentAction, parseAgentMessage, TagError } from "./tags.js";
import { buildSystemPrompt, buildUserPrompt, PromptBundle } from "./templates.js";
import { TranslationError, translateFinalLaw } from "./translate.js";

export interface ChatMessage {
  role: "system" | "user" | "assistant";
  content: string;
}

/** A provider maps the running conversation to the model's next text. */
export type Provider = (messages: ChatMessage[]) => Promise<string>;

export interface TranscriptEntry {
  agentText: string;
  action: AgentAction | null;
  feedback: string;
}

export interface Transcript {
  taskId: string;
  systemPrompt: string;
  userPrompt: string;
  entries: TranscriptEntry[];
  experiments: Array<{ assignments: Array<Record<string, number>> }>;
  submission: string | null;
  accepted: boolean;
  aborted: boolean;
}

export interface RelayOptions {
  maxReprompts?: number;
  maxTurns?: number;
  limits?: SandboxLimits;
  pythonBin?: string;
  roundTripSamples?: number;
}

export class RelayAborted extends Error {}

const NUMBER_DIGITS = 15;

function formatValue(value: number | null): string {
  if (value === null) {
    return "nan";
  }
  // pad the exponent to two digits, matching printf %e style
  return value
    .toExponential(NUMBER_DIGITS)
    .replace(/e([+-])(\d)$/, "e$10$2");
}

export function renderExperimentOutput(payload: {
  round: number;
  rounds_remaining: number;
  sets: Array<Record<string, number | null>>;
}): string {
  const lines = [
    "<experiment_output>",
    `round ${payload.round} (${payload.rounds_remaining} rounds remaining)`,
  ];
  payload.sets.forEach((row, i) => {
    const fields = Object.entries(row)
      .map(([name, value]) => `${name} = ${formatValue(value)}`)
      .join(", ");
    lines.push(`set ${i + 1}: ${fields}`);
  });
  lines.push("</experiment_output>");
  return lines.join("\n");
}

function renderError(code: string, message: string): string {
  return `Error (${code}): ${message}`;
}

export async function relaySession(
  provider: Provider,
  core: CoreSession,
  bundle: PromptBundle,
  budget: ToolBudget,
  options: RelayOptions = {},
): Promise<Transcript> {
  const {
    maxReprompts = 3,
    maxTurns = 100,
    limits = DEFAULT_LIMITS,
    pythonBin = "python3",
    roundTripSamples = 100,
  } = options;

  const systemPrompt = buildSystemPrompt(bundle);
  const userPrompt = buildUserPrompt(bundle);
  const messages: ChatMessage[] = [
    { role: "system", content: systemPrompt },
    { role: "user", content: userPrompt },
  ];
  const transcript: Transcript = {
    taskId: core.briefing.task_id,
    systemPrompt,
    userPrompt,
    entries: [],
    experiments: [],
    submission: null,
    accepted: false,
    aborted: false,
  };

  let consecutiveViolations = 0;
  for (let turn = 0; turn < maxTurns; turn += 1) {
    const agentText = await provider(messages);
    messages.push({ role: "assistant", content: agentText });

    let action: AgentAction;
    try {
      action = parseAgentMessage(agentText);
    } catch (err) {
      if (!(err instanceof TagError)) throw err;
      consecutiveViolations += 1;
      const feedback = renderError(err.code, err.message);
      transcript.entries.push({ agentText, action: null, feedback });
      if (consecutiveViolations > maxReprompts) {
        transcript.aborted = true;
        core.close();
        throw new RelayAborted(
          `aborted after ${maxReprompts} reprompts: ${err.message}`,
        );
      }
      messages.push({ role: "user", content: feedback });
      continue;
    }
    consecutiveViolations = 0;

    let feedback: string;
    if (action.kind === "run_experiment") {
      const payload = { assignments: action.assignments };
      const reply: WireMessage = await core.request("run_experiment", payload);
      if (reply.type === "experiment_output") {
        transcript.experiments.push(payload);
        feedback = renderExperimentOutput(reply.payload);
      } else {
        feedback = renderError(reply.payload.code, reply.payload.message);
      }
    } else if (action.kind === "python") {
      try {
        const output = executeCode(action.source, budget, limits, pythonBin);
        feedback = `<python_output>\n${output}\n</python_output>`;
      } catch (err) {
        if (err instanceof BudgetError) {
          feedback = renderError("budget-exhausted", err.message);
        } else if (err instanceof SandboxError) {
          feedback = renderError("sandbox-error", err.message);
        } else {
          throw err;
        }
      }
    } else {
      let expression: string;
      try {
        ({ expression } = translateFinalLaw(action.source, {
          samples: roundTripSamples,
          pythonBin,
        }));
      } catch (err) {
        if (!(err instanceof TranslationError)) throw err;
        feedback = renderError("translation-error", err.message);
        transcript.entries.push({ agentText, action, feedback });
        messages.push({ role: "user", content: feedback });
        continue;
      }
      const reply = await core.request("final_law", { expression });
      if (reply.type === "final_law" && reply.payload.accepted) {
        transcript.submission = reply.payload.expression;
        transcript.accepted = true;
        transcript.entries.push({
          agentText,
          action,
          feedback: `final law accepted: ${reply.payload.expression}`,
        });
        core.close();
        return transcript;
      }
      feedback = renderError(reply.payload.code, reply.payload.message);
    }
    transcript.entries.push({ agentText, action, feedback });
    messages.push({ role: "user", content: feedback });
  }
  transcript.aborted = true;
  core.close();
  throw new RelayAborted(`no final law after ${maxTurns} turns`);
}
