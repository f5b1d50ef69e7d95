/**
 * Scatter projection of the feature table: either two raw features or the
 * top two principal components.
 *
 * The projection runs client-side only to draw dots; subset membership is
 * decided by the server re-deriving the same projection from the filter
 * definition.  The math below therefore mirrors the analysis engine's
 * conventions exactly: features standardized by population standard
 * deviation, covariance with one delta degree of freedom, components sorted
 * by descending eigenvalue, each eigenvector's sign fixed so its
 * largest-magnitude loading is positive, and near-null directions collapsed
 * to exact zeros.
 */

import { FEATURES, FeatureName, ObjectRow, ProjectionNode, RectRegion } from "../api/types";

export interface ScatterPoint {
  id: number;
  x: number;
  y: number;
}

export function projectPair(
  rows: readonly ObjectRow[],
  featureX: FeatureName,
  featureY: FeatureName,
): ScatterPoint[] {
  return sortedById(rows).map((row) => ({
    id: row.id,
    x: row[featureX],
    y: row[featureY],
  }));
}

export function projectPca(rows: readonly ObjectRow[]): ScatterPoint[] {
  if (rows.length < 2) {
    throw new Error("pca needs at least two objects");
  }
  const ordered = sortedById(rows);
  const n = ordered.length;
  const d = FEATURES.length;
  const table = ordered.map((row) => FEATURES.map((f) => row[f]));

  // standardize with the population standard deviation; flat columns go to 0
  const mean = new Array<number>(d).fill(0);
  for (const r of table) {
    for (let j = 0; j < d; j++) {
      mean[j]! += r[j]! / n;
    }
  }
  const sd = new Array<number>(d).fill(0);
  for (const r of table) {
    for (let j = 0; j < d; j++) {
      sd[j]! += (r[j]! - mean[j]!) ** 2 / n;
    }
  }
  for (let j = 0; j < d; j++) {
    sd[j] = Math.sqrt(sd[j]!);
  }
  const z = table.map((r) =>
    r.map((v, j) => (sd[j]! > 0 ? (v - mean[j]!) / sd[j]! : 0)),
  );

  // sample covariance of the standardized columns
  const cov: number[][] = Array.from({ length: d }, () => new Array<number>(d).fill(0));
  const zMean = new Array<number>(d).fill(0);
  for (const r of z) {
    for (let j = 0; j < d; j++) {
      zMean[j]! += r[j]! / n;
    }
  }
  for (const r of z) {
    for (let j = 0; j < d; j++) {
      for (let k = 0; k < d; k++) {
        cov[j]![k]! += ((r[j]! - zMean[j]!) * (r[k]! - zMean[k]!)) / (n - 1);
      }
    }
  }

  const { values, vectors } = symmetricEigen(cov);
  const order = values
    .map((v, i) => [v, i] as const)
    .sort((a, b) => b[0] - a[0])
    .map(([, i]) => i);
  const lamMax = Math.max(1, values[order[0]!]!);

  const axes: number[][] = [];
  for (const k of order.slice(0, 2)) {
    if (values[k]! <= 1e-12 * lamMax) {
      axes.push(new Array<number>(n).fill(0));
      continue;
    }
    let v = vectors.map((row) => row[k]!);
    let peak = 0;
    for (let j = 1; j < d; j++) {
      if (Math.abs(v[j]!) > Math.abs(v[peak]!)) {
        peak = j;
      }
    }
    if (v[peak]! < 0) {
      v = v.map((c) => -c);
    }
    axes.push(z.map((r) => r.reduce((acc, zj, j) => acc + zj * v[j]!, 0)));
  }

  return ordered.map((row, i) => ({
    id: row.id,
    x: axes[0]![i]!,
    y: axes[1]![i]!,
  }));
}

export function project(
  rows: readonly ObjectRow[],
  method: "pca" | "pair",
  params: FeatureName[] = [],
): ScatterPoint[] {
  if (method === "pair") {
    const [fx, fy] = params;
    if (!fx || !fy) {
      throw new Error("pair projection needs two feature names");
    }
    return projectPair(rows, fx, fy);
  }
  return projectPca(rows);
}

/** Point ids inside a selection rectangle, boundary inclusive. */
export function pointsInRect(
  points: readonly ScatterPoint[],
  bounds: [number, number, number, number],
): number[] {
  const [xmin, ymin, xmax, ymax] = bounds;
  return points
    .filter((p) => p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax)
    .map((p) => p.id);
}

/** Filter definition for a rectangle drawn on the current projection. */
export function rectToFilter(
  method: "pca" | "pair",
  params: FeatureName[],
  bounds: [number, number, number, number],
): ProjectionNode {
  const region: RectRegion = { shape: "rect", bounds };
  return { kind: "projection", method, params, region };
}

function sortedById(rows: readonly ObjectRow[]): ObjectRow[] {
  return rows.slice().sort((a, b) => a.id - b.id);
}

/**
 * Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
 * rotations.  Plenty for a 4x4 covariance; returns eigenvectors as columns.
 */
function symmetricEigen(matrix: readonly (readonly number[])[]): {
  values: number[];
  vectors: number[][];
} {
  const d = matrix.length;
  const a = matrix.map((row) => row.slice());
  const v: number[][] = Array.from({ length: d }, (_, i) =>
    Array.from({ length: d }, (_, j) => (i === j ? 1 : 0)),
  );

  for (let sweep = 0; sweep < 100; sweep++) {
    let off = 0;
    for (let p = 0; p < d; p++) {
      for (let q = p + 1; q < d; q++) {
        off += a[p]![q]! * a[p]![q]!;
      }
    }
    if (off < 1e-30) {
      break;
    }
    for (let p = 0; p < d; p++) {
      for (let q = p + 1; q < d; q++) {
        if (Math.abs(a[p]![q]!) < 1e-300) {
          continue;
        }
        const theta = (a[q]![q]! - a[p]![p]!) / (2 * a[p]![q]!);
        const t = Math.sign(theta || 1) / (Math.abs(theta) + Math.sqrt(theta * theta + 1));
        const c = 1 / Math.sqrt(t * t + 1);
        const s = t * c;
        for (let k = 0; k < d; k++) {
          const akp = a[k]![p]!;
          const akq = a[k]![q]!;
          a[k]![p] = c * akp - s * akq;
          a[k]![q] = s * akp + c * akq;
        }
        for (let k = 0; k < d; k++) {
          const apk = a[p]![k]!;
          const aqk = a[q]![k]!;
          a[p]![k] = c * apk - s * aqk;
          a[q]![k] = s * apk + c * aqk;
        }
        for (let k = 0; k < d; k++) {
          const vkp = v[k]![p]!;
          const vkq = v[k]![q]!;
          v[k]![p] = c * vkp - s * vkq;
          v[k]![q] = s * vkp + c * vkq;
        }
      }
    }
  }
  return { values: Array.from({ length: d }, (_, i) => a[i]![i]!), vectors: v };
}
