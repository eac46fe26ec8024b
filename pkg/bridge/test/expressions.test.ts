import { describe, expect, it } from "vitest";
import {
  evaluate,
  ExpressionError,
  freeNames,
  parseExpression,
  serializeExpression,
} from "../src/expressions.js";

const evalText = (text: string, env: Record<string, number> = {}) =>
  evaluate(parseExpression(text), env);

describe("parseExpression", () => {
  it("applies standard precedence", () => {
    expect(evalText("2 + 3 * 4")).toBe(14);
    expect(evalText("(2 + 3) * 4")).toBe(20);
    expect(evalText("8 / 2 / 2")).toBe(2);
    expect(evalText("10 - 3 - 2")).toBe(5);
  });

  it("binds ^ tighter than * and right-associatively", () => {
    expect(evalText("2 * 3 ^ 2")).toBe(18);
    expect(evalText("2 ^ 3 ^ 2")).toBe(512);
    expect(evalText("2 ^ -1")).toBe(0.5);
  });

  it("handles unary minus and scientific notation", () => {
    expect(evalText("-2 ^ 2")).toBe(-4);
    expect(evalText("6.674e-5 * 2")).toBeCloseTo(1.3348e-4, 18);
  });

  it("evaluates the nine unary functions", () => {
    expect(evalText("exp(0)")).toBe(1);
    expect(evalText("log(exp(2))")).toBeCloseTo(2, 12);
    expect(evalText("sqrt(16)")).toBe(4);
    expect(evalText("sin(0) + cos(0) + tan(0)")).toBe(1);
    expect(evalText("asin(1)")).toBeCloseTo(Math.PI / 2, 12);
    expect(evalText("acos(1) + atan(0)")).toBe(0);
  });

  it("reads variables from the environment", () => {
    expect(evalText("C * m1 * m2 / r ^ 1.5", { C: 2, m1: 3, m2: 4, r: 4 })).toBe(3);
  });

  it("rejects malformed input", () => {
    expect(() => parseExpression("2 +")).toThrow(ExpressionError);
    expect(() => parseExpression("foo(1)")).toThrow(/unknown function/);
    expect(() => parseExpression("(1 + 2")).toThrow(/unclosed/);
    expect(() => parseExpression("1 2")).toThrow(/trailing/);
    expect(() => evalText("x + 1")).toThrow(/unbound/);
  });
});

describe("serializeExpression", () => {
  it("round-trips through the parser with identical values", () => {
    const cases = [
      "C * m1 * m2 / r ^ 1.5",
      "exp(-2 * x) + log(y) / sqrt(z)",
      "a - b - c ^ -0.5",
    ];
    const env = { C: 1.5, m1: 2, m2: 3, r: 4, x: 0.5, y: 2, z: 9, a: 7, b: 1, c: 4 };
    for (const text of cases) {
      const once = parseExpression(text);
      const again = parseExpression(serializeExpression(once));
      expect(evaluate(again, env)).toBeCloseTo(evaluate(once, env), 12);
    }
  });

  it("collects free names", () => {
    const tree = parseExpression("C * m1 / exp(r)");
    expect([...freeNames(tree)].sort()).toEqual(["C", "m1", "r"]);
  });
});
