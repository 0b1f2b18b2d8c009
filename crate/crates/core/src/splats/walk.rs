use super::AnchoredSplat;
use crate::geometry::Mesh;
use crate::math::Vec3;

/// Upper bound on face crossings per reanchoring.
pub const MAX_WALK_STEPS: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WalkOutcome {
    /// Number of edges crossed.
    pub steps: usize,
    /// Clamped in place because of a boundary edge, the step limit or a
    /// non-finite input.
    pub flagged: bool,
}

/// Re-expresses a drifted barycentric position so that all coordinates are
/// non-negative, moving it to neighbouring faces as needed.
///
/// With one negative coordinate the point is clamped onto the opposite edge,
/// renormalized and handed to the face across that edge (where it lies on the
/// shared edge). With two negative coordinates the unclamped point is carried
/// across the edge opposite the most negative one (lowest index on ties) by
/// unfolding the two faces into a common plane, and the walk continues.
pub fn walk_barycentric(mesh: &Mesh, face: usize, beta: Vec3) -> (usize, Vec3, WalkOutcome) {
    let mut face = face;
    let mut beta = beta;
    let mut outcome = WalkOutcome::default();
    if !beta.iter().all(|b| b.is_finite()) {
        outcome.flagged = true;
        return (face, Vec3::repeat(1.0 / 3.0), outcome);
    }
    loop {
        let negatives = beta.iter().filter(|b| **b < 0.0).count();
        if negatives == 0 {
            let sum = beta.sum();
            if (sum - 1.0).abs() > 1e-12 {
                beta /= sum;
            }
            return (face, beta, outcome);
        }
        let clamped = beta.map(|b| b.max(0.0));
        let sum = clamped.sum();
        if !(sum > 0.0) {
            outcome.flagged = true;
            return (face, Vec3::repeat(1.0 / 3.0), outcome);
        }
        let clamped = clamped / sum;
        let m = most_negative(&beta);
        let next = mesh.edge_opposite(face, m);
        if outcome.steps >= MAX_WALK_STEPS || next.is_none() {
            outcome.flagged = true;
            return (face, clamped, outcome);
        }
        let next = next.unwrap();
        outcome.steps += 1;
        if negatives == 1 {
            return (next, transfer_on_edge(mesh, face, m, next, &clamped), outcome);
        }
        beta = transfer_unfolded(mesh, face, m, next, &beta);
        face = next;
    }
}

fn most_negative(beta: &Vec3) -> usize {
    let mut m = 0;
    for k in 1..3 {
        if beta[k] < beta[m] {
            m = k;
        }
    }
    m
}

fn shared_locals(mesh: &Mesh, face: usize, m: usize, next: usize) -> (usize, usize, usize) {
    let f = mesh.faces()[face];
    let la = mesh.local_index(next, f[(m + 1) % 3]).expect("shared edge vertex");
    let lb = mesh.local_index(next, f[(m + 2) % 3]).expect("shared edge vertex");
    (la, lb, 3 - la - lb)
}

/// Point with zero weight on local vertex `m`, re-expressed in `next`.
fn transfer_on_edge(mesh: &Mesh, face: usize, m: usize, next: usize, beta: &Vec3) -> Vec3 {
    let (la, lb, lc) = shared_locals(mesh, face, m, next);
    let mut out = Vec3::zeros();
    out[la] = beta[(m + 1) % 3];
    out[lb] = beta[(m + 2) % 3];
    out[lc] = 0.0;
    out
}

/// Carries an arbitrary (affine) barycentric point across the edge opposite
/// local vertex `m`, treating the two faces as one unfolded plane.
fn transfer_unfolded(mesh: &Mesh, face: usize, m: usize, next: usize, beta: &Vec3) -> Vec3 {
    let f = mesh.faces()[face];
    let (la, lb, lc) = shared_locals(mesh, face, m, next);
    let pa = mesh.vertices[f[(m + 1) % 3]];
    let pb = mesh.vertices[f[(m + 2) % 3]];
    let pc = mesh.vertices[f[m]];
    let pd = mesh.vertices[mesh.faces()[next][lc]];
    let edge = pb - pa;
    let len = edge.norm();
    let ex = edge / len;
    let cx = (pc - pa).dot(&ex);
    let cy = ((pc - pa) - ex * cx).norm();
    let dx = (pd - pa).dot(&ex);
    let dy = -((pd - pa) - ex * dx).norm();
    // Old opposite vertex in the new face's coordinates.
    let gd = cy / dy;
    let gb = (cx - gd * dx) / len;
    let ga = 1.0 - gb - gd;
    let mut out = Vec3::zeros();
    out[la] = beta[(m + 1) % 3] + beta[m] * ga;
    out[lb] = beta[(m + 2) % 3] + beta[m] * gb;
    out[lc] = beta[m] * gd;
    out
}

/// Reanchors one splat after a barycentric update.
pub fn reanchor_walk(splat: &AnchoredSplat, mesh: &Mesh) -> (AnchoredSplat, WalkOutcome) {
    let (face, beta, outcome) = walk_barycentric(mesh, splat.face, splat.beta);
    let mut out = splat.clone();
    out.face = face;
    out.beta = beta;
    (out, outcome)
}
