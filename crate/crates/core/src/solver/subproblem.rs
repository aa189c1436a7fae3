//! Per-antenna sub-problems.
//!
//! With every other antenna frozen, the squared norm `|H~ h~_i|^2` seen by
//! user `i` is a Hermitian quadratic in the field response vector `f(x)` of
//! the one antenna being moved:
//!
//! ```text
//! G_i(x) = f^H Q f + 2 Re{f^H c} + const,   Q >= 0.
//! ```
//!
//! Convexity in `f` gives the tangent bound `G_i >= 2 Re{(Q f0 + c)^H f} + ...`,
//! which is exactly the `upsilon` form handled by [`crate::surrogate`].

use nalgebra::{DMatrix, DVector};

use crate::channel::{
    frv, Block, ChannelRealization, EffectiveChannel, FieldResponses, Layout, PathAngles,
};
use crate::config::SystemConfig;
use crate::metrics;
use crate::solver::qp::SubproblemSpec;
use crate::surrogate::{build_surrogate, gain_constraint, linearize_distance, Constraint};
use crate::{Position, C64};

/// `G(f) = f^H quad f + 2 Re{f^H linear} + constant`.
#[derive(Debug, Clone)]
pub struct BlockForm {
    pub quad: DMatrix<C64>,
    pub linear: DVector<C64>,
    pub constant: f64,
}

impl BlockForm {
    pub fn value(&self, f: &DVector<C64>) -> f64 {
        f.dotc(&(&self.quad * f)).re + 2.0 * f.dotc(&self.linear).re + self.constant
    }

    /// Coefficients of the tangent bound at `f0`: `quad f0 + linear`.
    pub fn tangent_coeffs(&self, f0: &DVector<C64>) -> DVector<C64> {
        &self.quad * f0 + &self.linear
    }
}

/// Channel state for one layout, with everything the sub-problem builders need.
#[derive(Debug, Clone)]
pub struct BlockContext<'a> {
    pub realization: &'a ChannelRealization,
    pub config: &'a SystemConfig,
    layout: Layout,
    responses: FieldResponses,
    channel: EffectiveChannel,
    gains: Vec<f64>,
}

impl<'a> BlockContext<'a> {
    pub fn new(realization: &'a ChannelRealization, config: &'a SystemConfig, layout: Layout) -> Self {
        let responses = FieldResponses::new(realization, &layout);
        let channel = EffectiveChannel::from_responses(realization, &responses, config.relay_gain);
        let gains = metrics::gains(&channel, &config.max_power);
        Self {
            realization,
            config,
            layout,
            responses,
            channel,
            gains,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn into_layout(self) -> Layout {
        self.layout
    }

    pub fn channel(&self) -> &EffectiveChannel {
        &self.channel
    }

    /// Effective gains `|p_i H~ h~_i|^2`.
    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// Power-free objective `|H~ h~_k|^2` of the weakest-user problem.
    pub fn objective(&self, k: usize) -> f64 {
        (&self.channel.relay_bs_scaled * &self.channel.user_links[k]).norm_squared()
    }

    /// Context with one antenna moved.
    pub fn moved(&self, block: Block, x: Position) -> Self {
        let mut layout = self.layout.clone();
        layout.set_position(block, x);
        Self::new(self.realization, self.config, layout)
    }

    /// Path angles whose FRV carries the dependence of user `i` on `block`.
    pub fn angles(&self, user: usize, block: Block) -> &'a PathAngles {
        match block {
            Block::User(k) => &self.realization.users[k].departure,
            Block::RelayRx(_) => &self.realization.users[user].relay_arrival,
            Block::RelayTx(_) => &self.realization.relay_departure,
            Block::Bs(_) => &self.realization.bs_arrival,
        }
    }

    /// Quadratic form of `|H~ h~_i|^2` in the FRV of `block`, or `None` when
    /// user `i` does not depend on that antenna.
    pub fn block_form(&self, user: usize, block: Block) -> Option<BlockForm> {
        let ht = &self.channel.relay_bs_scaled;
        let link = &self.channel.user_links[user];
        let sigma_u = &self.realization.users[user].response;
        let l_rows = |n: usize| DVector::<C64>::zeros(n);
        match block {
            Block::User(k) => {
                if k != user {
                    return None;
                }
                // v = H~ F_U^H Sigma_k u
                let w = ht * self.responses.relay_rx[k].adjoint() * sigma_u;
                Some(BlockForm {
                    quad: w.ad_mul(&w),
                    linear: l_rows(w.ncols()),
                    constant: 0.0,
                })
            }
            Block::RelayRx(m) => {
                // v = a s + b with s = f^H lambda
                let lambda = sigma_u * &self.responses.user[user];
                let a = ht.column(m).into_owned();
                let b = ht * link - &a * link[m];
                let cross = b.dotc(&a);
                Some(BlockForm {
                    quad: &lambda * lambda.adjoint() * C64::from(a.norm_squared()),
                    linear: &lambda * cross,
                    constant: b.norm_squared(),
                })
            }
            Block::RelayTx(m) => {
                // v = P f + q with P = F h~[m] B^H Sigma
                let bh_sigma = self.responses.bs.ad_mul(&self.realization.relay_response)
                    * C64::from(self.config.relay_gain);
                let p = &bh_sigma * link[m];
                let q = ht * link - &p * self.responses.relay_tx.column(m);
                Some(BlockForm {
                    quad: p.ad_mul(&p),
                    linear: p.ad_mul(&q),
                    constant: q.norm_squared(),
                })
            }
            Block::Bs(n) => {
                // v[n] = F b_n^H phi, other entries untouched
                let phi = &self.realization.relay_response * (&self.responses.relay_tx * link);
                let v = ht * link;
                let f2 = self.config.relay_gain * self.config.relay_gain;
                Some(BlockForm {
                    quad: &phi * phi.adjoint() * C64::from(f2),
                    linear: l_rows(phi.len()),
                    constant: v.norm_squared() - v[n].norm_sqr(),
                })
            }
        }
    }
}

/// A ready-to-solve sub-problem plus the bookkeeping the optimizer needs.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub block: Block,
    pub spec: SubproblemSpec,
    /// Some gain constraint had to be relaxed beyond round-off.
    pub restored: bool,
    /// `surrogate(x) + bound_offset <= |H~ h~_k|^2` with the antenna at `x`,
    /// with equality at the expansion point.
    pub bound_offset: f64,
}

fn block_index(block: Block) -> usize {
    match block {
        Block::User(i) | Block::RelayRx(i) | Block::RelayTx(i) | Block::Bs(i) => i,
    }
}

/// Surrogate objective for user `k`, distance cuts within the antenna's array
/// and gain cuts `g_i >= alpha0` for every other user that depends on it.
pub fn build_subproblem(ctx: &BlockContext, k: usize, block: Block, alpha0: f64) -> Subproblem {
    let x0 = ctx.layout.position(block);
    let angles = ctx.angles(k, block);
    let form = ctx
        .block_form(k, block)
        .expect("objective user depends on the block being optimized");
    let f0 = frv(&x0, angles);
    let bound_offset = form.constant - f0.dotc(&(&form.quad * &f0)).re;
    let surrogate = build_surrogate(form.tangent_coeffs(&f0), angles, &x0);

    let mut constraints = Vec::new();
    if !matches!(block, Block::User(_)) {
        let idx = block_index(block);
        for (j, other) in ctx.layout.array(block).iter().enumerate() {
            if j != idx {
                constraints.push(Constraint::HalfPlane(linearize_distance(
                    &x0,
                    other,
                    ctx.config.min_distance,
                    (idx, j),
                )));
            }
        }
    }

    let mut restored = false;
    for i in (0..ctx.gains.len()).filter(|&i| i != k) {
        let Some(form_i) = ctx.block_form(i, block) else {
            continue;
        };
        let angles_i = ctx.angles(i, block);
        let s_i = build_surrogate(form_i.tangent_coeffs(&frv(&x0, angles_i)), angles_i, &x0);
        if let Some(cut) = gain_constraint(&s_i, ctx.gains[i], ctx.config.max_power[i], alpha0) {
            restored |= cut.restored();
            constraints.push(Constraint::Disk(cut.disk));
        }
    }

    Subproblem {
        block,
        spec: SubproblemSpec {
            surrogate,
            region_size: ctx.config.region_size,
            constraints,
        },
        restored,
        bound_offset,
    }
}

/// Sub-problem for the weakest user's own antenna. Other users do not depend
/// on it, so only the box applies.
pub fn build_subproblem_user(ctx: &BlockContext, k: usize) -> Subproblem {
    build_subproblem(ctx, k, Block::User(k), 0.0)
}

/// Sub-problem for the `m`-th relay receive antenna.
pub fn build_subproblem_rs(ctx: &BlockContext, k: usize, m: usize, alpha0: f64) -> Subproblem {
    build_subproblem(ctx, k, Block::RelayRx(m), alpha0)
}

/// Sub-problem for the `m`-th relay transmit antenna.
pub fn build_subproblem_ts(ctx: &BlockContext, k: usize, m: usize, alpha0: f64) -> Subproblem {
    build_subproblem(ctx, k, Block::RelayTx(m), alpha0)
}

/// Sub-problem for the `n`-th base station antenna.
pub fn build_subproblem_bs(ctx: &BlockContext, k: usize, n: usize, alpha0: f64) -> Subproblem {
    build_subproblem(ctx, k, Block::Bs(n), alpha0)
}
