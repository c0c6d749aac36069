import { beforeAll, describe, expect, it } from "vitest";
import {
  ExportBundle,
  allBundles,
  exportFfn,
  exportRandomGcn,
} from "../src/export.js";
import { evalModelJson } from "../src/formats.js";

let bundles: ExportBundle[];

beforeAll(() => {
  bundles = allBundles();
});

describe("bundle self-consistency", () => {
  it("stored outputs match a re-evaluation of the serialized weights", () => {
    // the interchange invariant is 1e-5; both paths here are float64 so the
    // observed gap should be far below that
    for (const b of bundles) {
      let worst = 0;
      for (let i = 0; i < b.probes.inputs.length; i++) {
        const got = evalModelJson(b.model, b.probes.inputs[i]).out;
        const want = b.probes.outputs[i];
        expect(got.length).toBe(want.length);
        for (let k = 0; k < got.length; k++) {
          worst = Math.max(worst, Math.abs(got[k] - want[k]));
        }
      }
      expect(worst).toBeLessThanOrEqual(1e-9);
    }
  });

  it("every bundle trained to a lower loss", () => {
    for (const b of bundles) {
      expect(b.provenance.trained).toBe(true);
      expect(b.provenance.warning).toBeNull();
      expect(b.provenance.loss_final).toBeLessThan(b.provenance.loss_initial);
    }
  });

  it("probe sets hold 64 probes with a full hinge half", () => {
    for (const b of bundles) {
      expect(b.probes.inputs.length).toBe(64);
      expect(b.probes.kinds.length).toBe(64);
      const hinges = b.probes.kinds.filter((k) => k === "hinge").length;
      // gate cycling may fall back to random draws when a gate never fires
      expect(hinges).toBeGreaterThanOrEqual(24);
      expect(hinges).toBeLessThanOrEqual(32);
    }
  });

  it("hinge probes sit within 0.01 of some relu preactivation", () => {
    for (const b of bundles) {
      for (let i = 0; i < b.probes.inputs.length; i++) {
        if (b.probes.kinds[i] !== "hinge") continue;
        const gates = evalModelJson(b.model, b.probes.inputs[i]).gates;
        const nearest = Math.min(...gates.map((z) => Math.abs(z)));
        expect(nearest).toBeLessThan(0.01);
      }
    }
  });
});

describe("bundle schemas", () => {
  it("ffn is dense/relu alternation at the requested widths", () => {
    const b = bundles[0];
    expect(b.name).toBe("ffn_20_16_8_4");
    expect(b.model.input_shape).toEqual([20]);
    const kinds = b.model.layers.map((l) => l.kind);
    expect(kinds).toEqual(["dense", "relu", "dense", "relu", "dense"]);
    const first = b.model.layers[0] as { W: number[][] };
    expect(first.W.length).toBe(16);
    expect(first.W[0].length).toBe(20);
  });

  it("cnn is a 2-channel stride-1 pad-1 conv over 1x8x8", () => {
    const b = bundles[1];
    expect(b.model.input_shape).toEqual([1, 8, 8]);
    const conv = b.model.layers[0] as {
      kind: string;
      kernel: number[][][][];
      stride: number[];
      padding: number[];
    };
    expect(conv.kind).toBe("conv2d");
    expect(conv.stride).toEqual([1, 1]);
    expect(conv.padding).toEqual([1, 1]);
    expect(conv.kernel.length).toBe(2);
    expect(conv.kernel[0].length).toBe(1);
    expect(conv.kernel[0][0].length).toBe(3);
    expect(b.model.layers[1].kind).toBe("relu");
  });

  it("karate gcn carries a symmetric normalized adjacency", () => {
    const b = bundles[2];
    expect(b.model.input_shape).toEqual([34, 4]);
    expect(b.model.layers.map((l) => l.kind)).toEqual(["gcn", "relu", "gcn"]);
    const gcn = b.model.layers[0] as {
      adjacency: { rows: number[]; cols: number[]; vals: number[] };
      W: number[][];
    };
    const { rows, cols, vals } = gcn.adjacency;
    // 34 self loops plus both directions of the 78 club edges
    expect(rows.length).toBe(34 + 2 * 78);
    expect(cols.length).toBe(rows.length);
    expect(vals.length).toBe(rows.length);
    const lookup = new Map<string, number>();
    for (let e = 0; e < rows.length; e++) {
      expect(vals[e]).toBeGreaterThan(0);
      lookup.set(`${rows[e]},${cols[e]}`, vals[e]);
    }
    for (let e = 0; e < rows.length; e++) {
      expect(lookup.get(`${cols[e]},${rows[e]}`)).toBe(vals[e]);
    }
    expect(gcn.W.length).toBe(4);
    expect(gcn.W[0].length).toBe(8);
  });

  it("random gcn stays at 10 nodes", () => {
    const b = bundles[3];
    expect(b.model.input_shape).toEqual([10, 2]);
  });
});

describe("export behavior", () => {
  it("identical seeds rebuild byte-identical bundles", () => {
    const again = exportFfn(2025, [20, 16, 8, 4]);
    expect(JSON.stringify(again)).toBe(JSON.stringify(bundles[0]));
    const gcnAgain = exportRandomGcn(5);
    expect(JSON.stringify(gcnAgain)).toBe(JSON.stringify(bundles[3]));
  });

  it("rejects widths beyond desk scale", () => {
    expect(() => exportFfn(1, [20, 128, 4])).toThrow(/desk scale/);
  });

  it("divergent training falls back to random weights with a warning", () => {
    const b = exportFfn(3, [4, 4, 2], { lr: 1e4, epochs: 30 });
    expect(b.provenance.trained).toBe(false);
    expect(b.provenance.warning).toMatch(/diverged/);
    // the fallback bundle still satisfies the self-consistency invariant
    for (let i = 0; i < b.probes.inputs.length; i++) {
      const got = evalModelJson(b.model, b.probes.inputs[i]).out;
      for (let k = 0; k < got.length; k++) {
        expect(Math.abs(got[k] - b.probes.outputs[i][k])).toBeLessThanOrEqual(1e-9);
      }
    }
  });
});
