import { describe, expect, it } from "vitest";
import type { ObjectRow } from "../src/api/types";
import { pointsInRect, project, projectPca, rectToFilter } from "../src/plots/scatter";

function row(
  id: number,
  area: number,
  circularity: number,
  eccentricity: number,
  length: number,
): ObjectRow {
  return {
    id,
    bbox: [0, 0, 4, 4],
    provenance: "detected",
    pixels: 10,
    area,
    circularity,
    eccentricity,
    length,
    structure: 1,
  };
}

const ROWS = [
  row(1, 0.62, 0.91, 0.12, 0.4),
  row(2, 1.44, 0.72, 0.55, 1.1),
  row(3, 2.53, 0.48, 0.88, 1.95),
  row(4, 0.95, 0.83, 0.33, 0.7),
  row(5, 1.8, 0.6, 0.74, 1.52),
];

// Coordinates the analysis engine produces for the same table; the client
// projection must land on these so the dots match the server's membership.
const PCA_REFERENCE: Record<number, [number, number]> = {
  1: [-2.686796764636, -0.15467316991],
  2: [-0.043273099995, 0.109436551166],
  3: [2.917907049618, -0.204495433822],
  4: [-1.527751567172, 0.051875154658],
  5: [1.339914382184, 0.197856897908],
};

const PCA_FLAT_COLUMN_REFERENCE: Record<number, [number, number]> = {
  1: [-2.348150904209, -0.149463761458],
  2: [-0.004971275041, 0.102832810904],
  3: [2.517647565979, -0.205209641129],
  4: [-1.308362031771, 0.049698746498],
  5: [1.143836645042, 0.202141845185],
};

describe("pair projection", () => {
  it("uses the two named features verbatim", () => {
    const pts = project(ROWS, "pair", ["area", "length"]);
    expect(pts).toEqual([
      { id: 1, x: 0.62, y: 0.4 },
      { id: 2, x: 1.44, y: 1.1 },
      { id: 3, x: 2.53, y: 1.95 },
      { id: 4, x: 0.95, y: 0.7 },
      { id: 5, x: 1.8, y: 1.52 },
    ]);
  });

  it("orders points by object id regardless of input order", () => {
    const pts = project([...ROWS].reverse(), "pair", ["area", "length"]);
    expect(pts.map((p) => p.id)).toEqual([1, 2, 3, 4, 5]);
  });

  it("requires two feature names", () => {
    expect(() => project(ROWS, "pair", ["area"])).toThrow();
  });
});

describe("pca projection", () => {
  it("matches the analysis engine's coordinates", () => {
    const pts = projectPca(ROWS);
    for (const p of pts) {
      const [x, y] = PCA_REFERENCE[p.id]!;
      expect(Math.abs(p.x - x)).toBeLessThan(1e-9);
      expect(Math.abs(p.y - y)).toBeLessThan(1e-9);
    }
  });

  it("handles a constant column the way the engine does", () => {
    const flat = ROWS.map((r) => ({ ...r, circularity: 0.5 }));
    const pts = projectPca(flat);
    for (const p of pts) {
      const [x, y] = PCA_FLAT_COLUMN_REFERENCE[p.id]!;
      expect(Math.abs(p.x - x)).toBeLessThan(1e-9);
      expect(Math.abs(p.y - y)).toBeLessThan(1e-9);
    }
  });

  it("zeroes null directions for perfectly collinear data", () => {
    // all four features are affine images of one variable: rank 1
    const collinear = [1, 2, 3, 4].map((k) =>
      row(k, k, 0.1 + 0.05 * k, 0.1 * k, 2 * k),
    );
    const pts = projectPca(collinear);
    for (const p of pts) {
      expect(p.y).toBe(0);
    }
    // first component still spreads the points
    const xs = pts.map((p) => p.x);
    expect(new Set(xs.map((v) => v.toFixed(6))).size).toBe(4);
  });

  it("needs at least two objects", () => {
    expect(() => projectPca([ROWS[0]!])).toThrow();
  });
});

describe("rectangle selection", () => {
  it("is boundary inclusive", () => {
    const pts = project(ROWS, "pair", ["area", "length"]);
    expect(pointsInRect(pts, [0.95, 0.7, 2.53, 1.95])).toEqual([2, 3, 4, 5]);
    expect(pointsInRect(pts, [10, 10, 11, 11])).toEqual([]);
  });

  it("wraps the rectangle into a projection filter node", () => {
    expect(rectToFilter("pair", ["area", "length"], [0, 0, 1, 1])).toEqual({
      kind: "projection",
      method: "pair",
      params: ["area", "length"],
      region: { shape: "rect", bounds: [0, 0, 1, 1] },
    });
    expect(rectToFilter("pca", [], [-1, -1, 1, 1]).params).toEqual([]);
  });
});
