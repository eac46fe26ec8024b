export {
  evaluate,
  ExpressionError,
  freeNames,
  parseExpression,
  serializeExpression,
  UNARY_FUNCTIONS,
} from "./expressions.js";
export type { ExprNode, UnaryName } from "./expressions.js";
export { parseAgentMessage, TagError } from "./tags.js";
export type { AgentAction } from "./tags.js";
export {
  buildSystemPrompt,
  buildUserPrompt,
  loadTemplate,
  renderTemplate,
  TemplateError,
} from "./templates.js";
export type { PromptBundle } from "./templates.js";
export {
  samplePoints,
  TranslationError,
  translateFinalLaw,
  transliterate,
} from "./translate.js";
export type { RoundTripOptions, TranslatedLaw } from "./translate.js";
export {
  BudgetError,
  DEFAULT_LIMITS,
  executeCode,
  SandboxError,
  ToolBudget,
} from "./codeTool.js";
export type { SandboxLimits } from "./codeTool.js";
export { CoreSession, WireError } from "./client.js";
export type { BriefingPayload, SpawnOptions, WireMessage } from "./client.js";
export {
  RelayAborted,
  relaySession,
  renderExperimentOutput,
} from "./relay.js";
export type {
  ChatMessage,
  Provider,
  RelayOptions,
  Transcript,
  TranscriptEntry,
} from "./relay.js";
