/**
 * Model-exchange JSON: serializers for the trained fixtures and a standalone
 * interpreter that evaluates the serialized form directly. The interpreter
 * exists so bundle self-consistency is checked through a second code path
 * rather than the training classes re-reading their own weights.
 */
import { Conv2d, Ffn, ForwardTrace, Gcn } from "./nets.js";
import { affine, relu, zeros, Mat } from "./tensor.js";

export interface LayerJson {
  kind: string;
  [key: string]: unknown;
}

export interface ModelJson {
  input_shape: number[];
  layers: LayerJson[];
}

export function ffnToJson(net: Ffn): ModelJson {
  const layers: LayerJson[] = [];
  for (let l = 0; l < net.W.length; l++) {
    layers.push({ kind: "dense", W: net.W[l], b: net.b[l] });
    if (l < net.W.length - 1) layers.push({ kind: "relu" });
  }
  return { input_shape: [net.widths[0]], layers };
}

export function convToJson(c: Conv2d): ModelJson {
  return {
    input_shape: [c.inC, c.h, c.w],
    layers: [
      {
        kind: "conv2d",
        kernel: c.kernel,
        b: c.bias,
        stride: c.stride,
        padding: c.padding,
      },
      { kind: "relu" },
    ],
  };
}

export function gcnToJson(net: Gcn): ModelJson {
  const layers: LayerJson[] = [];
  for (let l = 0; l < net.W.length; l++) {
    layers.push({
      kind: "gcn",
      adjacency: { rows: net.adj.rows, cols: net.adj.cols, vals: net.adj.vals },
      W: net.W[l],
      b: net.b[l],
    });
    if (l < net.W.length - 1) layers.push({ kind: "relu" });
  }
  return { input_shape: [net.v, net.feats[0]], layers };
}

/**
 * Evaluate the serialized model at one input. Returns the output together
 * with every relu preactivation (for hinge verification).
 */
export function evalModelJson(model: ModelJson, x: number[]): ForwardTrace {
  let cur = x.slice();
  let shape = model.input_shape.slice();
  const gates: number[] = [];
  for (const layer of model.layers) {
    switch (layer.kind) {
      case "dense": {
        const W = layer.W as Mat;
        cur = affine(W, layer.b as number[], cur);
        shape = [W.length];
        break;
      }
      case "relu": {
        gates.push(...cur);
        cur = relu(cur);
        break;
      }
      case "conv2d": {
        const kernel = layer.kernel as number[][][][];
        const bias = layer.b as number[];
        const [sh, sw] = layer.stride as number[];
        const [ph, pw] = layer.padding as number[];
        const [inC, h, w] = shape;
        const outC = kernel.length;
        const kh = kernel[0][0].length;
        const kw = kernel[0][0][0].length;
        const ho = Math.floor((h + 2 * ph - kh) / sh) + 1;
        const wo = Math.floor((w + 2 * pw - kw) / sw) + 1;
        const out = zeros(outC * ho * wo);
        for (let o = 0; o < outC; o++) {
          for (let i = 0; i < ho; i++) {
            for (let j = 0; j < wo; j++) {
              let s = bias[o];
              for (let ic = 0; ic < inC; ic++) {
                for (let u = 0; u < kh; u++) {
                  const r = i * sh + u - ph;
                  if (r < 0 || r >= h) continue;
                  for (let v = 0; v < kw; v++) {
                    const q = j * sw + v - pw;
                    if (q < 0 || q >= w) continue;
                    s += kernel[o][ic][u][v] * cur[(ic * h + r) * w + q];
                  }
                }
              }
              out[(o * ho + i) * wo + j] = s;
            }
          }
        }
        cur = out;
        shape = [outC, ho, wo];
        break;
      }
      case "gcn": {
        const adj = layer.adjacency as { rows: number[]; cols: number[]; vals: number[] };
        const W = layer.W as Mat;
        const b = layer.b as number[];
        const [v, fIn] = shape;
        const fOut = W[0].length;
        const mixed = zeros(v * fIn);
        for (let e = 0; e < adj.rows.length; e++) {
          const r = adj.rows[e];
          const c = adj.cols[e];
          const val = adj.vals[e];
          for (let k = 0; k < fIn; k++) mixed[r * fIn + k] += val * cur[c * fIn + k];
        }
        const out = zeros(v * fOut);
        for (let r = 0; r < v; r++) {
          for (let k = 0; k < fOut; k++) {
            let s = b[k];
            for (let j = 0; j < fIn; j++) s += mixed[r * fIn + j] * W[j][k];
            out[r * fOut + k] = s;
          }
        }
        cur = out;
        shape = [v, fOut];
        break;
      }
      default:
        throw new Error(`unsupported layer kind ${layer.kind}`);
    }
  }
  return { out: cur, gates };
}
