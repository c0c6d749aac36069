/**
 * Bundle assembly: train a fixture, serialize it, and attach probes plus
 * provenance. Everything downstream of the seed is deterministic; there are
 * no wallclock or environment inputs.
 */
import { Rng } from "./rng.js";
import { affine } from "./tensor.js";
import {
  Conv2d,
  Ffn,
  ForwardTrace,
  Gcn,
  convForward,
  convPre,
  ffnForward,
  gcnForward,
  initConv,
  initFfn,
  initGcn,
  normalizedAdjacency,
  trainConv,
  trainFfn,
  trainGcn,
} from "./nets.js";
import { ModelJson, convToJson, ffnToJson, gcnToJson } from "./formats.js";
import { ProbeSet, makeProbes } from "./probes.js";

export interface Provenance {
  seed: number;
  epochs: number;
  lr: number;
  dataset: string;
  loss_initial: number;
  loss_final: number;
  trained: boolean;
  warning: string | null;
}

export interface ExportBundle {
  name: string;
  model: ModelJson;
  probes: ProbeSet;
  provenance: Provenance;
}

// larger layers belong in a real training stack, not a desk fixture
const MAX_WIDTH = 64;

interface GuardResult<T> {
  net: T;
  trained: boolean;
  warning: string | null;
}

/** Divergent training falls back to a fresh random initialization. */
function divergenceGuard<T>(net: T, losses: number[], reinit: () => T): GuardResult<T> {
  const first = losses[0];
  const last = losses[losses.length - 1];
  if (!Number.isFinite(last) || last > first) {
    return {
      net: reinit(),
      trained: false,
      warning: "training diverged; exported a fresh random initialization",
    };
  }
  return { net, trained: true, warning: null };
}

function provenance(
  seed: number,
  epochs: number,
  lr: number,
  dataset: string,
  losses: number[],
  guard: GuardResult<unknown>,
): Provenance {
  return {
    seed,
    epochs,
    lr,
    dataset,
    loss_initial: losses[0],
    loss_final: losses[losses.length - 1],
    trained: guard.trained,
    warning: guard.warning,
  };
}

export interface TrainOptions {
  lr?: number;
  epochs?: number;
}

export function exportFfn(seed: number, widths: number[], opts: TrainOptions = {}): ExportBundle {
  if (widths.some((w) => w > MAX_WIDTH)) {
    throw new Error(`layer width above ${MAX_WIDTH} is outside desk scale`);
  }
  const lr = opts.lr ?? 0.05;
  const epochs = opts.epochs ?? 300;
  const rng = new Rng(seed);
  let net = initFfn(widths, rng);
  const nIn = widths[0];
  const nOut = widths[widths.length - 1];
  // teacher: fixed random affine map squashed by tanh
  const T = Array.from({ length: nOut }, () =>
    Array.from({ length: nIn }, () => rng.normal() * 0.5),
  );
  const tb = Array.from({ length: nOut }, () => rng.normal() * 0.2);
  const xs = Array.from({ length: 256 }, () => rng.uniformVector(nIn, -1, 1));
  const ys = xs.map((x) => affine(T, tb, x).map(Math.tanh));
  const losses = trainFfn(net, xs, ys, lr, epochs);
  const guard = divergenceGuard(net, losses, () => initFfn(widths, new Rng(seed + 1)));
  net = guard.net;
  const probes = makeProbes((x) => ffnForward(net, x), nIn, rng, 64);
  return {
    name: `ffn_${widths.join("_")}`,
    model: ffnToJson(net),
    probes,
    provenance: provenance(
      seed,
      epochs,
      lr,
      `tanh-teacher regression, 256 uniform samples in [-1,1]^${nIn}`,
      losses,
      guard,
    ),
  };
}

export function exportCnn(seed: number, opts: TrainOptions = {}): ExportBundle {
  const lr = opts.lr ?? 0.2;
  const epochs = opts.epochs ?? 200;
  const rng = new Rng(seed);
  let net = initConv(1, 8, 8, 2, 3, 3, rng);
  // realizable target: a teacher conv with the same geometry
  const teacher = initConv(1, 8, 8, 2, 3, 3, rng);
  const xs = Array.from({ length: 128 }, () => rng.uniformVector(64, -1, 1));
  const ys = xs.map((x) => convPre(teacher, x).map((z) => (z > 0 ? z : 0)));
  const losses = trainConv(net, xs, ys, lr, epochs);
  const guard = divergenceGuard(net, losses, () => initConv(1, 8, 8, 2, 3, 3, new Rng(seed + 1)));
  net = guard.net;
  const probes = makeProbes((x) => convForward(net, x), 64, rng, 64);
  return {
    name: "cnn_1x8x8",
    model: convToJson(net),
    probes,
    provenance: provenance(
      seed,
      epochs,
      lr,
      "teacher-conv feature maps, 128 uniform 1x8x8 images",
      losses,
      guard,
    ),
  };
}

/** Zachary karate club: 34 nodes, 78 undirected edges, two factions. */
export const KARATE_EDGES: [number, number][] = [
  [0, 1], [0, 2], [0, 3], [0, 4], [0, 5], [0, 6], [0, 7], [0, 8], [0, 10],
  [0, 11], [0, 12], [0, 13], [0, 17], [0, 19], [0, 21], [0, 31],
  [1, 2], [1, 3], [1, 7], [1, 13], [1, 17], [1, 19], [1, 21], [1, 30],
  [2, 3], [2, 7], [2, 8], [2, 9], [2, 13], [2, 27], [2, 28], [2, 32],
  [3, 7], [3, 12], [3, 13],
  [4, 6], [4, 10],
  [5, 6], [5, 10], [5, 16],
  [6, 16],
  [8, 30], [8, 32], [8, 33],
  [9, 33],
  [13, 33],
  [14, 32], [14, 33],
  [15, 32], [15, 33],
  [18, 32], [18, 33],
  [19, 33],
  [20, 32], [20, 33],
  [22, 32], [22, 33],
  [23, 25], [23, 27], [23, 29], [23, 32], [23, 33],
  [24, 25], [24, 27], [24, 31],
  [25, 31],
  [26, 29], [26, 33],
  [27, 33],
  [28, 31], [28, 33],
  [29, 32], [29, 33],
  [30, 32], [30, 33],
  [31, 32], [31, 33],
  [32, 33],
];

const KARATE_MR_HI = new Set([0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 11, 12, 13, 16, 17, 19, 21]);

export function exportKarateGcn(seed: number, opts: TrainOptions = {}): ExportBundle {
  const lr = opts.lr ?? 0.3;
  const epochs = opts.epochs ?? 200;
  const v = 34;
  const feats = [4, 8, 2];
  const adj = normalizedAdjacency(v, KARATE_EDGES);
  const rng = new Rng(seed);
  let net = initGcn(v, feats, adj, rng);
  // fixed node features with gaussian jitter; faction one-hot targets
  const base = rng.uniformVector(v * feats[0], -1, 1);
  const label: number[] = [];
  for (let i = 0; i < v; i++) label.push(KARATE_MR_HI.has(i) ? 1 : 0, KARATE_MR_HI.has(i) ? 0 : 1);
  const xs = Array.from({ length: 96 }, () => base.map((b) => b + 0.25 * rng.normal()));
  const ys = xs.map(() => label);
  const losses = trainGcn(net, xs, ys, lr, epochs);
  const guard = divergenceGuard(net, losses, () => initGcn(v, feats, adj, new Rng(seed + 1)));
  net = guard.net;
  const probes = makeProbes((x) => gcnForward(net, x), v * feats[0], rng, 64);
  return {
    name: "gcn_karate",
    model: gcnToJson(net),
    probes,
    provenance: provenance(
      seed,
      epochs,
      lr,
      "karate-club node classification, 96 jittered feature samples",
      losses,
      guard,
    ),
  };
}

export function exportRandomGcn(seed: number, opts: TrainOptions = {}): ExportBundle {
  const lr = opts.lr ?? 0.2;
  const epochs = opts.epochs ?? 200;
  const v = 10;
  const feats = [2, 2, 2];
  const rng = new Rng(seed);
  // chain keeps the graph connected; extra edges drawn at random
  const edges: [number, number][] = [];
  for (let i = 0; i + 1 < v; i++) edges.push([i, i + 1]);
  for (let i = 0; i < v; i++) {
    for (let j = i + 2; j < v; j++) {
      if (rng.next() < 0.2) edges.push([i, j]);
    }
  }
  const adj = normalizedAdjacency(v, edges);
  let net = initGcn(v, feats, adj, rng);
  const teacher = initGcn(v, feats, adj, rng);
  const dim = v * feats[0];
  const xs = Array.from({ length: 128 }, () => rng.uniformVector(dim, -1, 1));
  const ys = xs.map((x) => gcnForward(teacher, x).out);
  const losses = trainGcn(net, xs, ys, lr, epochs);
  const guard = divergenceGuard(net, losses, () => initGcn(v, feats, adj, new Rng(seed + 1)));
  net = guard.net;
  const probes = makeProbes((x) => gcnForward(net, x), dim, rng, 64);
  return {
    name: "gcn_random_10",
    model: gcnToJson(net),
    probes,
    provenance: provenance(
      seed,
      epochs,
      lr,
      "teacher-gcn regression on a 10-node random graph, 128 uniform samples",
      losses,
      guard,
    ),
  };
}

export function allBundles(): ExportBundle[] {
  return [
    exportFfn(2025, [20, 16, 8, 4]),
    exportCnn(7),
    exportKarateGcn(11),
    exportRandomGcn(5),
  ];
}

export type { ForwardTrace, Ffn, Conv2d, Gcn };
