/**
 * Hand-rolled float64 networks: forward passes, backprop, and plain SGD.
 *
 * Parameter shapes mirror the exchange format so serialization is a straight
 * copy: dense W is (out, in), conv kernels are (outC, inC, kh, kw) with
 * row-major (c, h, w) flattening, gcn W is (fIn, fOut) applied after the
 * normalized adjacency mix.
 */
import { Rng } from "./rng.js";
import { Mat, affine, relu, zeros, zerosMat } from "./tensor.js";

export interface ForwardTrace {
  out: number[];
  /** Inputs to every relu, concatenated in layer order. */
  gates: number[];
}

// ---------- feedforward ----------

export interface Ffn {
  widths: number[];
  /** W[l] has shape (widths[l+1], widths[l]). */
  W: Mat[];
  b: number[][];
}

export function initFfn(widths: number[], rng: Rng): Ffn {
  const W: Mat[] = [];
  const b: number[][] = [];
  for (let l = 0; l + 1 < widths.length; l++) {
    const scale = Math.sqrt(2 / widths[l]);
    W.push(
      Array.from({ length: widths[l + 1] }, () =>
        Array.from({ length: widths[l] }, () => rng.normal() * scale),
      ),
    );
    b.push(Array.from({ length: widths[l + 1] }, () => rng.normal() * 0.1));
  }
  return { widths, W, b };
}

/** Relu after every layer except the last. */
export function ffnForward(net: Ffn, x: number[]): ForwardTrace {
  let cur = x;
  const gates: number[] = [];
  for (let l = 0; l < net.W.length; l++) {
    const z = affine(net.W[l], net.b[l], cur);
    if (l < net.W.length - 1) {
      gates.push(...z);
      cur = relu(z);
    } else {
      cur = z;
    }
  }
  return { out: cur, gates };
}

export interface FfnGrads {
  dW: Mat[];
  db: number[][];
  loss: number;
}

/** Mean-squared-error loss and its gradients for one sample. */
export function ffnGrad(net: Ffn, x: number[], target: number[]): FfnGrads {
  const zs: number[][] = [];
  const acts: number[][] = [x];
  let cur = x;
  for (let l = 0; l < net.W.length; l++) {
    const z = affine(net.W[l], net.b[l], cur);
    zs.push(z);
    cur = l < net.W.length - 1 ? relu(z) : z;
    acts.push(cur);
  }
  const out = acts[acts.length - 1];
  const m = out.length;
  let loss = 0;
  let delta = zeros(m);
  for (let i = 0; i < m; i++) {
    const d = out[i] - target[i];
    loss += (d * d) / m;
    delta[i] = (2 * d) / m;
  }
  const dW = net.W.map((w) => zerosMat(w.length, w[0].length));
  const db = net.b.map((bl) => zeros(bl.length));
  for (let l = net.W.length - 1; l >= 0; l--) {
    const below = acts[l];
    for (let i = 0; i < delta.length; i++) {
      db[l][i] += delta[i];
      for (let j = 0; j < below.length; j++) dW[l][i][j] += delta[i] * below[j];
    }
    if (l > 0) {
      const next = zeros(below.length);
      for (let j = 0; j < below.length; j++) {
        let s = 0;
        for (let i = 0; i < delta.length; i++) s += net.W[l][i][j] * delta[i];
        next[j] = zs[l - 1][j] > 0 ? s : 0; // relu mask of the layer below
      }
      delta = next;
    }
  }
  return { dW, db, loss };
}

/** Full-batch gradient descent; returns the mean loss per epoch. */
export function trainFfn(
  net: Ffn,
  xs: number[][],
  ys: number[][],
  lr: number,
  epochs: number,
): number[] {
  const losses: number[] = [];
  for (let e = 0; e < epochs; e++) {
    const accW = net.W.map((w) => zerosMat(w.length, w[0].length));
    const accB = net.b.map((bl) => zeros(bl.length));
    let total = 0;
    for (let s = 0; s < xs.length; s++) {
      const g = ffnGrad(net, xs[s], ys[s]);
      total += g.loss;
      for (let l = 0; l < accW.length; l++) {
        for (let i = 0; i < accW[l].length; i++) {
          accB[l][i] += g.db[l][i];
          for (let j = 0; j < accW[l][i].length; j++) accW[l][i][j] += g.dW[l][i][j];
        }
      }
    }
    const step = lr / xs.length;
    for (let l = 0; l < net.W.length; l++) {
      for (let i = 0; i < net.W[l].length; i++) {
        net.b[l][i] -= step * accB[l][i];
        for (let j = 0; j < net.W[l][i].length; j++) net.W[l][i][j] -= step * accW[l][i][j];
      }
    }
    losses.push(total / xs.length);
  }
  return losses;
}

// ---------- 2-d convolution ----------

export interface Conv2d {
  inC: number;
  h: number;
  w: number;
  outC: number;
  kh: number;
  kw: number;
  stride: [number, number];
  padding: [number, number];
  /** (outC, inC, kh, kw). */
  kernel: number[][][][];
  bias: number[];
}

/** Stride-1 conv with same padding, followed by a relu in the exported model. */
export function initConv(
  inC: number,
  h: number,
  w: number,
  outC: number,
  kh: number,
  kw: number,
  rng: Rng,
): Conv2d {
  const scale = Math.sqrt(2 / (inC * kh * kw));
  const kernel = Array.from({ length: outC }, () =>
    Array.from({ length: inC }, () =>
      Array.from({ length: kh }, () =>
        Array.from({ length: kw }, () => rng.normal() * scale),
      ),
    ),
  );
  const bias = Array.from({ length: outC }, () => rng.normal() * 0.1);
  return {
    inC,
    h,
    w,
    outC,
    kh,
    kw,
    stride: [1, 1],
    padding: [(kh - 1) / 2, (kw - 1) / 2],
    kernel,
    bias,
  };
}

export function convPre(c: Conv2d, x: number[]): number[] {
  const { inC, h, w, outC, kh, kw } = c;
  const [ph, pw] = c.padding;
  const out = zeros(outC * h * w);
  for (let o = 0; o < outC; o++) {
    for (let i = 0; i < h; i++) {
      for (let j = 0; j < w; j++) {
        let s = c.bias[o];
        for (let ic = 0; ic < inC; ic++) {
          for (let u = 0; u < kh; u++) {
            const r = i + u - ph;
            if (r < 0 || r >= h) continue;
            for (let v = 0; v < kw; v++) {
              const q = j + v - pw;
              if (q < 0 || q >= w) continue;
              s += c.kernel[o][ic][u][v] * x[(ic * h + r) * w + q];
            }
          }
        }
        out[(o * h + i) * w + j] = s;
      }
    }
  }
  return out;
}

export function convForward(c: Conv2d, x: number[]): ForwardTrace {
  const pre = convPre(c, x);
  return { out: relu(pre), gates: pre };
}

export interface ConvGrads {
  dK: number[][][][];
  dB: number[];
  loss: number;
}

export function convGrad(c: Conv2d, x: number[], target: number[]): ConvGrads {
  const { inC, h, w, outC, kh, kw } = c;
  const [ph, pw] = c.padding;
  const pre = convPre(c, x);
  const m = pre.length;
  const dK = c.kernel.map((oc) => oc.map((ic) => ic.map((row) => row.map(() => 0))));
  const dB = zeros(outC);
  let loss = 0;
  for (let o = 0; o < outC; o++) {
    for (let i = 0; i < h; i++) {
      for (let j = 0; j < w; j++) {
        const idx = (o * h + i) * w + j;
        const y = pre[idx] > 0 ? pre[idx] : 0;
        const d = y - target[idx];
        loss += (d * d) / m;
        if (pre[idx] <= 0) continue; // relu kills the gradient
        const delta = (2 * d) / m;
        dB[o] += delta;
        for (let ic = 0; ic < inC; ic++) {
          for (let u = 0; u < kh; u++) {
            const r = i + u - ph;
            if (r < 0 || r >= h) continue;
            for (let v = 0; v < kw; v++) {
              const q = j + v - pw;
              if (q < 0 || q >= w) continue;
              dK[o][ic][u][v] += delta * x[(ic * h + r) * w + q];
            }
          }
        }
      }
    }
  }
  return { dK, dB, loss };
}

export function trainConv(
  c: Conv2d,
  xs: number[][],
  ys: number[][],
  lr: number,
  epochs: number,
): number[] {
  const losses: number[] = [];
  for (let e = 0; e < epochs; e++) {
    const accK = c.kernel.map((oc) => oc.map((ic) => ic.map((row) => row.map(() => 0))));
    const accB = zeros(c.outC);
    let total = 0;
    for (let s = 0; s < xs.length; s++) {
      const g = convGrad(c, xs[s], ys[s]);
      total += g.loss;
      for (let o = 0; o < c.outC; o++) {
        accB[o] += g.dB[o];
        for (let ic = 0; ic < c.inC; ic++)
          for (let u = 0; u < c.kh; u++)
            for (let v = 0; v < c.kw; v++) accK[o][ic][u][v] += g.dK[o][ic][u][v];
      }
    }
    const step = lr / xs.length;
    for (let o = 0; o < c.outC; o++) {
      c.bias[o] -= step * accB[o];
      for (let ic = 0; ic < c.inC; ic++)
        for (let u = 0; u < c.kh; u++)
          for (let v = 0; v < c.kw; v++) c.kernel[o][ic][u][v] -= step * accK[o][ic][u][v];
    }
    losses.push(total / xs.length);
  }
  return losses;
}

// ---------- graph convolution ----------

export interface SparseAdj {
  rows: number[];
  cols: number[];
  vals: number[];
}

/** Symmetric normalization D^-1/2 (A + I) D^-1/2 over an undirected edge list. */
export function normalizedAdjacency(v: number, edges: [number, number][]): SparseAdj {
  const deg = new Array<number>(v).fill(1); // self loop
  for (const [a, b] of edges) {
    deg[a] += 1;
    deg[b] += 1;
  }
  const rows: number[] = [];
  const cols: number[] = [];
  const vals: number[] = [];
  for (let i = 0; i < v; i++) {
    rows.push(i);
    cols.push(i);
    vals.push(1 / deg[i]);
  }
  for (const [a, b] of edges) {
    const val = 1 / Math.sqrt(deg[a] * deg[b]);
    rows.push(a, b);
    cols.push(b, a);
    vals.push(val, val);
  }
  return { rows, cols, vals };
}

export interface Gcn {
  v: number;
  /** Feature widths per stage, e.g. [4, 8, 2]. */
  feats: number[];
  adj: SparseAdj;
  /** W[l] has shape (feats[l], feats[l+1]). */
  W: Mat[];
  b: number[][];
}

export function initGcn(v: number, feats: number[], adj: SparseAdj, rng: Rng): Gcn {
  const W: Mat[] = [];
  const b: number[][] = [];
  for (let l = 0; l + 1 < feats.length; l++) {
    const scale = Math.sqrt(2 / feats[l]);
    W.push(
      Array.from({ length: feats[l] }, () =>
        Array.from({ length: feats[l + 1] }, () => rng.normal() * scale),
      ),
    );
    b.push(Array.from({ length: feats[l + 1] }, () => rng.normal() * 0.1));
  }
  return { v, feats, adj, W, b };
}

/** mixed[r] = sum_c A[r,c] feats[c], features as (v, f) rows. */
function adjMix(adj: SparseAdj, feats: Mat, v: number, f: number): Mat {
  const out = zerosMat(v, f);
  for (let e = 0; e < adj.rows.length; e++) {
    const r = adj.rows[e];
    const c = adj.cols[e];
    const val = adj.vals[e];
    const src = feats[c];
    const dst = out[r];
    for (let k = 0; k < f; k++) dst[k] += val * src[k];
  }
  return out;
}

function gcnStages(net: Gcn, x: number[]): { zs: Mat[]; hs: Mat[] } {
  let h = Array.from({ length: net.v }, (_, i) =>
    x.slice(i * net.feats[0], (i + 1) * net.feats[0]),
  );
  const zs: Mat[] = [];
  const hs: Mat[] = [h];
  for (let l = 0; l < net.W.length; l++) {
    const fIn = net.feats[l];
    const fOut = net.feats[l + 1];
    const mixed = adjMix(net.adj, h, net.v, fIn);
    const z = zerosMat(net.v, fOut);
    for (let r = 0; r < net.v; r++) {
      for (let k = 0; k < fOut; k++) {
        let s = net.b[l][k];
        for (let j = 0; j < fIn; j++) s += mixed[r][j] * net.W[l][j][k];
        z[r][k] = s;
      }
    }
    zs.push(z);
    h = l < net.W.length - 1 ? z.map((row) => relu(row)) : z;
    hs.push(h);
  }
  return { zs, hs };
}

export function gcnForward(net: Gcn, x: number[]): ForwardTrace {
  const { zs, hs } = gcnStages(net, x);
  const gates: number[] = [];
  for (let l = 0; l < zs.length - 1; l++) for (const row of zs[l]) gates.push(...row);
  return { out: hs[hs.length - 1].flat(), gates };
}

export interface GcnGrads {
  dW: Mat[];
  db: number[][];
  loss: number;
}

export function gcnGrad(net: Gcn, x: number[], target: number[]): GcnGrads {
  const { zs, hs } = gcnStages(net, x);
  const out = hs[hs.length - 1];
  const fLast = net.feats[net.feats.length - 1];
  const m = net.v * fLast;
  let loss = 0;
  let delta = zerosMat(net.v, fLast);
  for (let r = 0; r < net.v; r++) {
    for (let k = 0; k < fLast; k++) {
      const d = out[r][k] - target[r * fLast + k];
      loss += (d * d) / m;
      delta[r][k] = (2 * d) / m;
    }
  }
  const dW = net.W.map((w) => zerosMat(w.length, w[0].length));
  const db = net.b.map((bl) => zeros(bl.length));
  for (let l = net.W.length - 1; l >= 0; l--) {
    const fIn = net.feats[l];
    const fOut = net.feats[l + 1];
    const mixed = adjMix(net.adj, hs[l], net.v, fIn);
    for (let r = 0; r < net.v; r++) {
      for (let k = 0; k < fOut; k++) {
        const d = delta[r][k];
        db[l][k] += d;
        for (let j = 0; j < fIn; j++) dW[l][j][k] += mixed[r][j] * d;
      }
    }
    if (l > 0) {
      // dH = A^T (delta W^T); A is symmetric so reuse the mix
      const dMixed = zerosMat(net.v, fIn);
      for (let r = 0; r < net.v; r++)
        for (let j = 0; j < fIn; j++) {
          let s = 0;
          for (let k = 0; k < fOut; k++) s += delta[r][k] * net.W[l][j][k];
          dMixed[r][j] = s;
        }
      const dH = adjMix(net.adj, dMixed, net.v, fIn);
      for (let r = 0; r < net.v; r++)
        for (let j = 0; j < fIn; j++) if (zs[l - 1][r][j] <= 0) dH[r][j] = 0;
      delta = dH;
    }
  }
  return { dW, db, loss };
}

export function trainGcn(
  net: Gcn,
  xs: number[][],
  ys: number[][],
  lr: number,
  epochs: number,
): number[] {
  const losses: number[] = [];
  for (let e = 0; e < epochs; e++) {
    const accW = net.W.map((w) => zerosMat(w.length, w[0].length));
    const accB = net.b.map((bl) => zeros(bl.length));
    let total = 0;
    for (let s = 0; s < xs.length; s++) {
      const g = gcnGrad(net, xs[s], ys[s]);
      total += g.loss;
      for (let l = 0; l < accW.length; l++)
        for (let j = 0; j < accW[l].length; j++) {
          for (let k = 0; k < accW[l][j].length; k++) accW[l][j][k] += g.dW[l][j][k];
        }
      for (let l = 0; l < accB.length; l++)
        for (let k = 0; k < accB[l].length; k++) accB[l][k] += g.db[l][k];
    }
    const step = lr / xs.length;
    for (let l = 0; l < net.W.length; l++) {
      for (let j = 0; j < net.W[l].length; j++)
        for (let k = 0; k < net.W[l][j].length; k++) net.W[l][j][k] -= step * accW[l][j][k];
      for (let k = 0; k < net.b[l].length; k++) net.b[l][k] -= step * accB[l][k];
    }
    losses.push(total / xs.length);
  }
  return losses;
}
