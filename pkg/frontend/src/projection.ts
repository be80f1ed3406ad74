/**
 * Viewport projection for the 3D panels: an orbiting orthographic camera
 * around the scene centroid. This is rendering geometry only; residual
 * numerics always come from the API.
 */

import type { CameraDTO, PoseDTO } from "./api";

export interface Orbit {
  yawDeg: number;
  pitchDeg: number;
  zoom: number;
}

export function defaultOrbit(): Orbit {
  return { yawDeg: -35, pitchDeg: -55, zoom: 1 };
}

export type Vec3 = readonly [number, number, number];
export type Mat3 = readonly [number, number, number, number, number, number, number, number, number];

export function rotationFromQuaternion(q: readonly [number, number, number, number]): Mat3 {
  const [w, x, y, z] = q;
  return [
    1 - 2 * (y * y + z * z),
    2 * (x * y - w * z),
    2 * (x * z + w * y),
    2 * (x * y + w * z),
    1 - 2 * (x * x + z * z),
    2 * (y * z - w * x),
    2 * (x * z - w * y),
    2 * (y * z + w * x),
    1 - 2 * (x * x + y * y),
  ];
}

function matVec(m: Mat3, v: Vec3): [number, number, number] {
  return [
    m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
    m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
    m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
  ];
}

function orbitMatrix(orbit: Orbit): Mat3 {
  const yaw = (orbit.yawDeg * Math.PI) / 180;
  const pitch = (orbit.pitchDeg * Math.PI) / 180;
  const cy = Math.cos(yaw);
  const sy = Math.sin(yaw);
  const cp = Math.cos(pitch);
  const sp = Math.sin(pitch);
  // Yaw about world z, then pitch about the screen x axis.
  return [cy, sy, 0, -sy * cp, cy * cp, sp, sy * sp, -cy * sp, cp];
}

export interface Viewport {
  width: number;
  height: number;
  center: Vec3;
  extent: number;
  orbit: Orbit;
}

/** Fit a viewport around a point cloud; extent is the largest centroid offset. */
export function fitViewport(
  points: readonly Vec3[],
  width: number,
  height: number,
  orbit: Orbit,
): Viewport {
  let cx = 0;
  let cy = 0;
  let cz = 0;
  for (const [x, y, z] of points) {
    cx += x;
    cy += y;
    cz += z;
  }
  const n = Math.max(points.length, 1);
  const center: Vec3 = [cx / n, cy / n, cz / n];
  let extent = 1e-9;
  for (const [x, y, z] of points) {
    const d = Math.hypot(x - center[0], y - center[1], z - center[2]);
    if (d > extent) extent = d;
  }
  return { width, height, center, extent, orbit };
}

/** World point to screen pixel under the viewport's orbit. */
export function project(vp: Viewport, p: Vec3): [number, number] {
  const m = orbitMatrix(vp.orbit);
  const q = matVec(m, [p[0] - vp.center[0], p[1] - vp.center[1], p[2] - vp.center[2]]);
  const s = (vp.orbit.zoom * Math.min(vp.width, vp.height)) / (2.2 * vp.extent);
  return [vp.width / 2 + q[0] * s, vp.height / 2 - q[1] * s];
}

/**
 * Frustum outline for a camera: its center plus the four rays toward the
 * image corners, cut at a depth proportional to the scene extent.
 */
export function frustumPoints(camera: CameraDTO, pose: PoseDTO, depth: number): Vec3[] {
  const k = camera.intrinsics;
  const rot = rotationFromQuaternion(pose.rotation);
  // World->camera is x_cam = R (x_world - C); camera axes in world space are
  // the rows of R, so a camera-frame direction d maps to R^T d.
  const axisX: Vec3 = [rot[0], rot[1], rot[2]];
  const axisY: Vec3 = [rot[3], rot[4], rot[5]];
  const axisZ: Vec3 = [rot[6], rot[7], rot[8]];
  const c = pose.center;
  const corners: Vec3[] = [];
  for (const [sx, sy] of [
    [-1, -1],
    [1, -1],
    [1, 1],
    [-1, 1],
  ] as const) {
    const dx = (sx * (k.width / 2)) / k.fx;
    const dy = (sy * (k.height / 2)) / k.fy;
    corners.push([
      c[0] + depth * (dx * axisX[0] + dy * axisY[0] + axisZ[0]),
      c[1] + depth * (dx * axisX[1] + dy * axisY[1] + axisZ[1]),
      c[2] + depth * (dx * axisX[2] + dy * axisY[2] + axisZ[2]),
    ]);
  }
  return [c, ...corners];
}

/** Angle in degrees between the rays from two camera centers to a point. */
export function rayAngleDeg(a: Vec3, b: Vec3, point: Vec3): number {
  const u: Vec3 = [point[0] - a[0], point[1] - a[1], point[2] - a[2]];
  const v: Vec3 = [point[0] - b[0], point[1] - b[1], point[2] - b[2]];
  const nu = Math.hypot(...u);
  const nv = Math.hypot(...v);
  if (nu === 0 || nv === 0) return 0;
  const dot = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]) / (nu * nv);
  return (Math.acos(Math.min(1, Math.max(-1, dot))) * 180) / Math.PI;
}
