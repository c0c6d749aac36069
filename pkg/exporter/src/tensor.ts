/** Dense row-major helpers on plain number arrays; everything stays float64. */

export type Mat = number[][];

export function zeros(n: number): number[] {
  return new Array<number>(n).fill(0);
}

export function zerosMat(rows: number, cols: number): Mat {
  return Array.from({ length: rows }, () => new Array<number>(cols).fill(0));
}

/** y = W x + b with W shaped (out, in). */
export function affine(W: Mat, b: number[], x: number[]): number[] {
  const out = new Array<number>(W.length);
  for (let i = 0; i < W.length; i++) {
    const row = W[i];
    let s = b[i];
    for (let j = 0; j < row.length; j++) s += row[j] * x[j];
    out[i] = s;
  }
  return out;
}

export function relu(v: number[]): number[] {
  return v.map((z) => (z > 0 ? z : 0));
}

export function mse(pred: number[], target: number[]): number {
  let s = 0;
  for (let i = 0; i < pred.length; i++) {
    const d = pred[i] - target[i];
    s += d * d;
  }
  return s / pred.length;
}
