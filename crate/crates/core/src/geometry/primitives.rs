//! Procedural closed meshes used as templates and synthetic targets.

use std::collections::HashMap;

use super::Mesh;
use crate::math::Vec3;

pub fn tetrahedron() -> Mesh {
    let v = vec![
        Vec3::new(1.0, 1.0, 1.0),
        Vec3::new(1.0, -1.0, -1.0),
        Vec3::new(-1.0, 1.0, -1.0),
        Vec3::new(-1.0, -1.0, 1.0),
    ];
    let f = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    Mesh::new(v, f).expect("tetrahedron is valid")
}

/// Icosahedron refined `level` times by edge midpoints projected onto the
/// sphere: `20 * 4^level` faces.
pub fn icosphere(level: usize, radius: f64) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts.into_iter().map(|v| v * radius).collect();
    Mesh::new(verts, faces).expect("icosphere is valid")
}

/// Axis-aligned cube `[-half, half]³` with each side split into an `n × n`
/// grid of quads (two triangles each): `12 n²` faces.
/// Open `n × n` grid of unit cells scaled by `spacing` in the `z = 0` plane,
/// normals along `+z`.
pub fn plane_grid(n: usize, spacing: f64) -> Mesh {
    let n = n.max(1);
    let mut v = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            v.push(Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut f = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            f.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
            f.push([id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Mesh::new(v, f).expect("plane grid is valid")
}

pub fn cube_grid(n: usize, half: f64) -> Mesh {
    assert!(n >= 1);
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    let n_i = n as i64;
    let mut vid = |p: [i64; 3], verts: &mut Vec<Vec3>| -> usize {
        *index.entry(p).or_insert_with(|| {
            verts.push(Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) * (2.0 * half / n as f64) - Vec3::repeat(half));
            verts.len() - 1
        })
    };
    for axis in 0..3 {
        for side in [0, n_i] {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for i in 0..n_i {
                for j in 0..n_i {
                    let corner = |di: i64, dj: i64| {
                        let mut p = [0i64; 3];
                        p[axis] = side;
                        p[u] = i + di;
                        p[v] = j + dj;
                        p
                    };
                    let a = vid(corner(0, 0), &mut verts);
                    let b = vid(corner(1, 0), &mut verts);
                    let c = vid(corner(1, 1), &mut verts);
                    let d = vid(corner(0, 1), &mut verts);
                    // (u, v, axis) is right-handed, so a→b→c winds toward +axis.
                    if side == 0 {
                        faces.push([a, c, b]);
                        faces.push([a, d, c]);
                    } else {
                        faces.push([a, b, c]);
                        faces.push([a, c, d]);
                    }
                }
            }
        }
    }
    Mesh::new(verts, faces).expect("cube grid is valid")
}
