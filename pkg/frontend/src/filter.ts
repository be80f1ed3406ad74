/**
 * Client-side residual filter with semantics identical to the server's.
 *
 * The server rounds length and angle to `precision` decimal digits before
 * the range tests, using Python's round (correctly rounded decimal with
 * ties to even). Matching that bit for bit is what lets the UI filter
 * records locally and still agree with /api/stats counts, so the rounding
 * here works on the exact decimal expansion of the double rather than
 * trusting floating-point arithmetic.
 */

export type ResidualKind = "initial" | "final";

export interface FilterState {
  /** Record kinds to keep. */
  readonly kinds: ReadonlySet<ResidualKind>;
  /** Inclusive bounds on the rounded residual length, max may be Infinity. */
  readonly lengthRange: readonly [number, number];
  /** Wrapping angular window in degrees; start === end means no constraint. */
  readonly angleRange: readonly [number, number];
  /** Decimal digits both values are rounded to before comparison, 0..12. */
  readonly precision: number;
  /** Rendering magnification for drawn residual lines; never affects membership. */
  readonly scale: number;
}

/** Wire shape of a filter, as /api/stats expects and echoes. */
export interface FilterDTO {
  kinds: ResidualKind[];
  length_range: [number, number | null];
  angle_range: [number, number];
  precision: number;
  scale: number;
}

export interface RecordLike {
  kind: string;
  length: number;
  angle: number;
}

export function defaultFilter(): FilterState {
  return {
    kinds: new Set<ResidualKind>(["initial", "final"]),
    lengthRange: [0, Infinity],
    angleRange: [0, 0],
    precision: 12,
    scale: 1,
  };
}

export function validateFilter(f: FilterState): void {
  for (const kind of f.kinds) {
    if (kind !== "initial" && kind !== "final") {
      throw new Error(`unknown residual kind: ${kind}`);
    }
  }
  const [lo, hi] = f.lengthRange;
  if (!(lo <= hi)) throw new Error("length range min must be <= max");
  if (lo < 0) throw new Error("length range must be non-negative");
  const [a, b] = f.angleRange;
  if (!(a >= 0 && a < 360 && b >= 0 && b < 360)) {
    throw new Error("angle range endpoints must lie in [0, 360)");
  }
  if (!Number.isInteger(f.precision) || f.precision < 0 || f.precision > 12) {
    throw new Error("precision must be an integer in [0, 12]");
  }
  if (!(f.scale > 0)) throw new Error("scale must be > 0");
}

export function withFilter(f: FilterState, patch: Partial<FilterState>): FilterState {
  const next: FilterState = {
    kinds: patch.kinds !== undefined ? new Set(patch.kinds) : f.kinds,
    lengthRange: patch.lengthRange ?? f.lengthRange,
    angleRange: patch.angleRange ?? f.angleRange,
    precision: patch.precision ?? f.precision,
    scale: patch.scale ?? f.scale,
  };
  validateFilter(next);
  return next;
}

export function filterToJSON(f: FilterState): FilterDTO {
  const [lo, hi] = f.lengthRange;
  return {
    kinds: [...f.kinds].sort() as ResidualKind[],
    length_range: [lo, Number.isFinite(hi) ? hi : null],
    angle_range: [f.angleRange[0], f.angleRange[1]],
    precision: f.precision,
    scale: f.scale,
  };
}

export function filterFromJSON(d: Partial<FilterDTO>): FilterState {
  const base = defaultFilter();
  const f: FilterState = {
    kinds: d.kinds !== undefined ? new Set(d.kinds) : base.kinds,
    lengthRange:
      d.length_range !== undefined
        ? [d.length_range[0], d.length_range[1] === null ? Infinity : d.length_range[1]]
        : base.lengthRange,
    angleRange: d.angle_range !== undefined ? [d.angle_range[0], d.angle_range[1]] : base.angleRange,
    precision: d.precision ?? base.precision,
    scale: d.scale ?? base.scale,
  };
  validateFilter(f);
  return f;
}

// ---------------------------------------------------------------------------
// Decimal rounding identical to Python's round(float, ndigits)
// ---------------------------------------------------------------------------

const bits = new DataView(new ArrayBuffer(8));

const POW5: bigint[] = [1n];
const POW10: bigint[] = [1n];
function pow5(k: number): bigint {
  while (POW5.length <= k) POW5.push(POW5[POW5.length - 1]! * 5n);
  return POW5[k]!;
}
function pow10(k: number): bigint {
  while (POW10.length <= k) POW10.push(POW10[POW10.length - 1]! * 10n);
  return POW10[k]!;
}

/**
 * Round to `digits` decimal places exactly as Python's round() does:
 * correctly rounded on the exact decimal expansion of the double, ties to
 * even, result converted back to the nearest double.
 */
export function pyRound(x: number, digits: number): number {
  if (!Number.isFinite(x) || x === 0) return x;
  const neg = x < 0;
  bits.setFloat64(0, Math.abs(x));
  const hi = bits.getUint32(0);
  const lo = bits.getUint32(4);
  const biasedExp = (hi >>> 20) & 0x7ff;
  let mantissa = (BigInt(hi & 0xfffff) << 32n) | BigInt(lo);
  let exp2: number;
  if (biasedExp === 0) {
    exp2 = -1074;
  } else {
    mantissa |= 1n << 52n;
    exp2 = biasedExp - 1075;
  }

  // |x| = mantissa * 2^exp2. With exp2 >= 0 the value is an integer; with
  // exp2 = -k it equals (mantissa * 5^k) / 10^k, an exact decimal with k
  // fractional digits.
  let scaled: bigint;
  let fracDigits: number;
  if (exp2 >= 0) {
    scaled = mantissa << BigInt(exp2);
    fracDigits = 0;
  } else {
    scaled = mantissa * pow5(-exp2);
    fracDigits = -exp2;
  }
  if (fracDigits <= digits) return x; // already exact at this precision

  const div = pow10(fracDigits - digits);
  let q = scaled / div;
  const r = scaled % div;
  const twice = r * 2n;
  if (twice > div || (twice === div && (q & 1n) === 1n)) q += 1n;

  if (q === 0n) return neg ? -0 : 0;
  const text = q.toString();
  let decimal: string;
  if (digits <= 0) {
    decimal = text;
  } else if (text.length > digits) {
    decimal = `${text.slice(0, text.length - digits)}.${text.slice(text.length - digits)}`;
  } else {
    decimal = `0.${text.padStart(digits, "0")}`;
  }
  const out = Number(decimal);
  return neg ? -out : out;
}

/** Non-negative remainder mod 360, matching Python's % on these inputs. */
export function mod360(angle: number): number {
  const r = angle % 360;
  return r < 0 ? r + 360 : r;
}

export function angleInRange(angle: number, start: number, end: number): boolean {
  if (start === end) return true; // degenerate range = no angular constraint
  if (start <= end) return start <= angle && angle <= end;
  return angle >= start || angle <= end;
}

export function recordPasses(rec: RecordLike, f: FilterState): boolean {
  if (!f.kinds.has(rec.kind as ResidualKind)) return false;
  const [lo, hi] = f.lengthRange;
  const length = pyRound(rec.length, f.precision);
  if (!(lo <= length && length <= hi)) return false;
  const angle = mod360(pyRound(rec.angle, f.precision));
  return angleInRange(angle, f.angleRange[0], f.angleRange[1]);
}

export function applyFilter<T extends RecordLike>(records: readonly T[], f: FilterState): T[] {
  return records.filter((rec) => recordPasses(rec, f));
}
