/**
 * Probe construction: half uniform draws, half sitting on relu hinges
 * (|z| < 0.01 for some gate) to stress tie handling in downstream loaders.
 */
import { Rng } from "./rng.js";
import { ForwardTrace } from "./nets.js";
import { zeros } from "./tensor.js";

export type TraceFn = (x: number[]) => ForwardTrace;

export interface ProbeSet {
  inputs: number[][];
  outputs: number[][];
  kinds: string[]; // "random" | "hinge"
}

const HINGE_BAND = 0.01;

/**
 * Bisect a sign change of one gate along the chord between two random
 * points; z is continuous piecewise linear there, so a crossing exists.
 */
function hingeForGate(
  fwd: TraceFn,
  dim: number,
  rng: Rng,
  gate: number,
  lo: number,
  hi: number,
): number[] | null {
  for (let attempt = 0; attempt < 40; attempt++) {
    const a = rng.uniformVector(dim, lo, hi);
    const b = rng.uniformVector(dim, lo, hi);
    const za = fwd(a).gates[gate];
    const zb = fwd(b).gates[gate];
    if (Math.abs(za) < HINGE_BAND) return a;
    if (Math.abs(zb) < HINGE_BAND) return b;
    if (za > 0 === zb > 0) continue;
    let loP = a;
    let hiP = b;
    let mid = a;
    for (let it = 0; it < 80; it++) {
      mid = loP.map((v, k) => 0.5 * (v + hiP[k]));
      const zm = fwd(mid).gates[gate];
      if (Math.abs(zm) < 1e-9) break;
      if (zm > 0 === za > 0) loP = mid;
      else hiP = mid;
    }
    if (Math.abs(fwd(mid).gates[gate]) < HINGE_BAND) return mid;
  }
  return null;
}

export function makeProbes(
  fwd: TraceFn,
  dim: number,
  rng: Rng,
  count = 64,
  lo = -1,
  hi = 1,
): ProbeSet {
  const inputs: number[][] = [];
  const kinds: string[] = [];
  const half = Math.floor(count / 2);
  for (let i = 0; i < half; i++) {
    inputs.push(rng.uniformVector(dim, lo, hi));
    kinds.push("random");
  }
  const nGates = fwd(zeros(dim)).gates.length;
  for (let i = 0; i < count - half; i++) {
    let found: number[] | null = null;
    // cycle through gates so dead ones do not starve the hinge half
    for (let probe = 0; probe < nGates && found === null; probe++) {
      found = hingeForGate(fwd, dim, rng, (i + probe) % nGates, lo, hi);
    }
    if (found === null) {
      inputs.push(rng.uniformVector(dim, lo, hi));
      kinds.push("random");
    } else {
      inputs.push(found);
      kinds.push("hinge");
    }
  }
  const outputs = inputs.map((x) => fwd(x).out);
  return { inputs, outputs, kinds };
}
