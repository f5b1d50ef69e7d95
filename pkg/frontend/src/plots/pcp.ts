/**
 * Parallel-coordinates geometry and brush logic for the feature table.
 *
 * One vertical axis per morphology feature, one polyline per object.  A
 * brush is a value interval on one axis; the set of brushes compiles to a
 * filter definition the server evaluates, so the highlighted lines here and
 * the subset membership there come from the same predicate.
 */

import { FEATURES, FeatureName, FilterNode, ObjectRow, RangeNode } from "../api/types";

export interface AxisDomain {
  feature: FeatureName;
  lo: number;
  hi: number;
}

export interface AxisBrush {
  feature: FeatureName;
  lo?: number;
  hi?: number;
}

/** Value range of every axis over the current object table. */
export function axisDomains(rows: readonly ObjectRow[]): AxisDomain[] {
  return FEATURES.map((feature) => {
    let lo = Infinity;
    let hi = -Infinity;
    for (const row of rows) {
      const v = row[feature];
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
    if (!Number.isFinite(lo)) {
      lo = 0;
      hi = 1;
    }
    return { feature, lo, hi };
  });
}

/** Map a feature value onto [0, 1] within its axis domain. */
export function valueToNormalized(domain: AxisDomain, v: number): number {
  if (domain.hi === domain.lo) {
    return 0.5;
  }
  return (v - domain.lo) / (domain.hi - domain.lo);
}

/** Inverse of valueToNormalized; t outside [0, 1] extrapolates. */
export function normalizedToValue(domain: AxisDomain, t: number): number {
  return domain.lo + t * (domain.hi - domain.lo);
}

/**
 * Vertices of one object's polyline, as normalized [0, 1] heights in axis
 * order.  Screen placement (axis spacing, y flip) is the renderer's job.
 */
export function polyline(row: ObjectRow, domains: readonly AxisDomain[]): number[] {
  return domains.map((d) => valueToNormalized(d, row[d.feature]));
}

/**
 * Compile active brushes into the filter definition sent to the server.
 *
 * Brushes with no finite bound select everything and are dropped.  One
 * surviving brush yields a bare range node; several are conjoined.  Bounds
 * are inclusive, matching how the analysis engine evaluates ranges, and
 * unset bounds are omitted rather than sent as nulls so the recorded
 * definition stays in its minimal canonical form.
 */
export function brushesToFilter(brushes: readonly AxisBrush[]): FilterNode | null {
  const nodes: RangeNode[] = [];
  for (const brush of brushes) {
    const node: RangeNode = { kind: "range", feature: brush.feature };
    if (brush.lo !== undefined && Number.isFinite(brush.lo)) {
      node.lo = brush.lo;
    }
    if (brush.hi !== undefined && Number.isFinite(brush.hi)) {
      node.hi = brush.hi;
    }
    if (node.lo !== undefined || node.hi !== undefined) {
      nodes.push(node);
    }
  }
  if (nodes.length === 0) {
    return null;
  }
  if (nodes.length === 1) {
    return nodes[0] as RangeNode;
  }
  return { kind: "combine", op: "and", children: nodes };
}

/** Ids of rows inside every brush, mirroring the server's inclusive ranges. */
export function rowsInBrushes(
  rows: readonly ObjectRow[],
  brushes: readonly AxisBrush[],
): number[] {
  const active = brushes.filter((b) => b.lo !== undefined || b.hi !== undefined);
  const out: number[] = [];
  for (const row of rows) {
    let inside = true;
    for (const b of active) {
      const v = row[b.feature];
      if ((b.lo !== undefined && v < b.lo) || (b.hi !== undefined && v > b.hi)) {
        inside = false;
        break;
      }
    }
    if (inside) {
      out.push(row.id);
    }
  }
  return out;
}
