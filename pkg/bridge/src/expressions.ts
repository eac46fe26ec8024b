/**
 * Parser and evaluator for the canonical expression text used by the
 * session wire protocol: infix arithmetic with `^` for exponentiation
 * (right-associative) and nine unary functions. Used to cross-check
 * translated submissions numerically before they are sent to the core.
 */

export const UNARY_FUNCTIONS = [
  "exp",
  "log",
  "sqrt",
  "sin",
  "cos",
  "tan",
  "asin",
  "acos",
  "atan",
] as const;

export type UnaryName = (typeof UNARY_FUNCTIONS)[number];

export type ExprNode =
  | { kind: "number"; value: number }
  | { kind: "name"; name: string }
  | { kind: "unary"; fn: UnaryName; arg: ExprNode }
  | { kind: "neg"; arg: ExprNode }
  | { kind: "binary"; op: "+" | "-" | "*" | "/" | "^"; left: ExprNode; right: ExprNode };

export class ExpressionError extends Error {}

type Token =
  | { kind: "number"; value: number }
  | { kind: "name"; name: string }
  | { kind: "punct"; text: string };

const NAME_RE = /^[A-Za-z_][A-Za-z0-9_]*/;
const NUMBER_RE = /^(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?/;

function tokenize(text: string): Token[] {
  const tokens: Token[] = [];
  let rest = text;
  while (rest.length > 0) {
    const ws = rest.match(/^\s+/);
    if (ws) {
      rest = rest.slice(ws[0].length);
      continue;
    }
    const num = rest.match(NUMBER_RE);
    if (num) {
      tokens.push({ kind: "number", value: Number(num[0]) });
      rest = rest.slice(num[0].length);
      continue;
    }
    const name = rest.match(NAME_RE);
    if (name) {
      tokens.push({ kind: "name", name: name[0] });
      rest = rest.slice(name[0].length);
      continue;
    }
    const ch = rest[0];
    if ("+-*/^(),".includes(ch)) {
      tokens.push({ kind: "punct", text: ch });
      rest = rest.slice(1);
      continue;
    }
    throw new ExpressionError(`unexpected character ${JSON.stringify(ch)}`);
  }
  return tokens;
}

class Parser {
  private pos = 0;

  constructor(private readonly tokens: Token[]) {}

  parse(): ExprNode {
    const node = this.sum();
    if (this.pos < this.tokens.length) {
      throw new ExpressionError("trailing tokens after expression");
    }
    return node;
  }

  private peek(): Token | undefined {
    return this.tokens[this.pos];
  }

  private takePunct(text: string): boolean {
    const tok = this.peek();
    if (tok && tok.kind === "punct" && tok.text === text) {
      this.pos += 1;
      return true;
    }
    return false;
  }

  private sum(): ExprNode {
    let left = this.product();
    for (;;) {
      if (this.takePunct("+")) {
        left = { kind: "binary", op: "+", left, right: this.product() };
      } else if (this.takePunct("-")) {
        left = { kind: "binary", op: "-", left, right: this.product() };
      } else {
        return left;
      }
    }
  }

  private product(): ExprNode {
    let left = this.unary();
    for (;;) {
      if (this.takePunct("*")) {
        left = { kind: "binary", op: "*", left, right: this.unary() };
      } else if (this.takePunct("/")) {
        left = { kind: "binary", op: "/", left, right: this.unary() };
      } else {
        return left;
      }
    }
  }

  private unary(): ExprNode {
    if (this.takePunct("-")) {
      return { kind: "neg", arg: this.unary() };
    }
    if (this.takePunct("+")) {
      return this.unary();
    }
    return this.power();
  }

  private power(): ExprNode {
    const base = this.atom();
    if (this.takePunct("^")) {
      // right-associative; the exponent may carry its own unary minus
      return { kind: "binary", op: "^", left: base, right: this.unary() };
    }
    return base;
  }

  private atom(): ExprNode {
    const tok = this.peek();
    if (tok === undefined) {
      throw new ExpressionError("unexpected end of expression");
    }
    if (tok.kind === "number") {
      this.pos += 1;
      return { kind: "number", value: tok.value };
    }
    if (tok.kind === "name") {
      this.pos += 1;
      if (this.takePunct("(")) {
        const fn = tok.name as UnaryName;
        if (!UNARY_FUNCTIONS.includes(fn)) {
          throw new ExpressionError(`unknown function ${tok.name}`);
        }
        const arg = this.sum();
        if (!this.takePunct(")")) {
          throw new ExpressionError(`unclosed call to ${tok.name}`);
        }
        return { kind: "unary", fn, arg };
      }
      return { kind: "name", name: tok.name };
    }
    if (tok.kind === "punct" && tok.text === "(") {
      this.pos += 1;
      const inner = this.sum();
      if (!this.takePunct(")")) {
        throw new ExpressionError("unclosed parenthesis");
      }
      return inner;
    }
    throw new ExpressionError(`unexpected token ${JSON.stringify(tok)}`);
  }
}

export function parseExpression(text: string): ExprNode {
  return new Parser(tokenize(text)).parse();
}

const UNARY_IMPL: Record<UnaryName, (x: number) => number> = {
  exp: Math.exp,
  log: Math.log,
  sqrt: Math.sqrt,
  sin: Math.sin,
  cos: Math.cos,
  tan: Math.tan,
  asin: Math.asin,
  acos: Math.acos,
  atan: Math.atan,
};

/** Evaluates a parsed expression; domain errors surface as NaN. */
export function evaluate(node: ExprNode, env: Record<string, number>): number {
  switch (node.kind) {
    case "number":
      return node.value;
    case "name": {
      const value = env[node.name];
      if (value === undefined) {
        throw new ExpressionError(`unbound name ${node.name}`);
      }
      return value;
    }
    case "neg":
      return -evaluate(node.arg, env);
    case "unary":
      return UNARY_IMPL[node.fn](evaluate(node.arg, env));
    case "binary": {
      const a = evaluate(node.left, env);
      const b = evaluate(node.right, env);
      switch (node.op) {
        case "+":
          return a + b;
        case "-":
          return a - b;
        case "*":
          return a * b;
        case "/":
          return b === 0 ? NaN : a / b;
        case "^":
          return Math.pow(a, b);
      }
    }
  }
}

/** Names referenced by the expression, excluding function names. */
export function freeNames(node: ExprNode): Set<string> {
  const out = new Set<string>();
  const walk = (n: ExprNode): void => {
    switch (n.kind) {
      case "name":
        out.add(n.name);
        break;
      case "neg":
      case "unary":
        walk(n.arg);
        break;
      case "binary":
        walk(n.left);
        walk(n.right);
        break;
    }
  };
  walk(node);
  return out;
}

/** Renders the tree back to canonical text the core parser accepts. */
export function serializeExpression(node: ExprNode): string {
  const inner = (n: ExprNode): string => {
    switch (n.kind) {
      case "number":
        return n.value < 0 ? `(${formatNumber(n.value)})` : formatNumber(n.value);
      case "name":
        return n.name;
      case "neg":
        return `(-${inner(n.arg)})`;
      case "unary":
        return `${n.fn}(${serializeExpression(n.arg)})`;
      case "binary":
        return `(${inner(n.left)} ${n.op} ${inner(n.right)})`;
    }
  };
  const text = inner(node);
  return text.startsWith("(") && text.endsWith(")") && balancedTrim(text)
    ? text.slice(1, -1)
    : text;
}

function balancedTrim(text: string): boolean {
  // true when the outermost parens wrap the whole expression
  let depth = 0;
  for (let i = 0; i < text.length - 1; i += 1) {
    if (text[i] === "(") depth += 1;
    if (text[i] === ")") depth -= 1;
    if (depth === 0) return false;
  }
  return true;
}

function formatNumber(value: number): string {
  // shortest round-trip representation; the tokenizer reads it back exactly
  return value.toString();
}
