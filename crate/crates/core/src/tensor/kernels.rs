//! Inner loops for matmul and convolution. All kernels accumulate into their
//! output buffer (`+=`), except the forward passes which start from scratch.

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub in_ch: usize,
    pub out_ch: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

/// Four-lane dot product. The fixed lane split keeps results reproducible
/// while letting the compiler vectorize.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, ra) = (a.chunks_exact(4), a.chunks_exact(4).remainder());
    let rb = b.chunks_exact(4).remainder();
    for (x, y) in ca.zip(b.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out = a (m x k) * b (k x n)`
pub(crate) fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    if n == 1 {
        for (o, row) in out.iter_mut().zip(a.chunks_exact(k)) {
            *o = dot(row, b);
        }
        return;
    }
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(out_row, a[i * k + p], &b[p * n..(p + 1) * n]);
        }
    }
}

/// `da += g (m x n) * b^T`
pub(crate) fn matmul_grad_lhs(g: &[f64], b: &[f64], da: &mut [f64], m: usize, k: usize, n: usize) {
    if n == 1 {
        for i in 0..m {
            if g[i] != 0.0 {
                axpy(&mut da[i * k..(i + 1) * k], g[i], b);
            }
        }
        return;
    }
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            da[i * k + p] += dot(g_row, &b[p * n..(p + 1) * n]);
        }
    }
}

/// `db += a^T * g (m x n)`
pub(crate) fn matmul_grad_rhs(a: &[f64], g: &[f64], db: &mut [f64], m: usize, k: usize, n: usize) {
    if n == 1 {
        for i in 0..m {
            if g[i] != 0.0 {
                axpy(db, g[i], &a[i * k..(i + 1) * k]);
            }
        }
        return;
    }
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(&mut db[p * n..(p + 1) * n], a[i * k + p], g_row);
        }
    }
}

/// Valid output range along one axis for kernel offset `d`.
#[inline]
fn span(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).min(len as isize).max(0) as usize;
    (lo, hi.max(lo))
}

/// Visits every (output channel, input channel, kernel tap) with the
/// overlapping output row/column ranges and the matching input offsets.
#[inline]
fn for_each_tap(dims: &ConvDims, mut f: impl FnMut(usize, usize, usize, isize, isize)) {
    let pad = (dims.k / 2) as isize;
    for o in 0..dims.out_ch {
        for c in 0..dims.in_ch {
            for ky in 0..dims.k {
                for kx in 0..dims.k {
                    let tap = ((o * dims.in_ch + c) * dims.k + ky) * dims.k + kx;
                    f(o, c, tap, ky as isize - pad, kx as isize - pad);
                }
            }
        }
    }
}

pub(crate) fn conv2d(x: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64], d: &ConvDims) {
    let (h, w) = (d.h, d.w);
    let plane = h * w;
    for (o, &b) in bias.iter().enumerate() {
        out[o * plane..(o + 1) * plane].fill(b);
    }
    for_each_tap(d, |o, c, tap, dy, dx| {
        let wv = weight[tap];
        if wv == 0.0 {
            return;
        }
        let (y0, y1) = span(h, dy);
        let (x0, x1) = span(w, dx);
        for y in y0..y1 {
            let src = c * plane + (y as isize + dy) as usize * w;
            let dst = o * plane + y * w;
            let xs = (x0 as isize + dx) as usize;
            axpy(
                &mut out[dst + x0..dst + x1],
                wv,
                &x[src + xs..src + xs + (x1 - x0)],
            );
        }
    });
}

pub(crate) fn conv2d_grad_input(g: &[f64], weight: &[f64], dx_buf: &mut [f64], d: &ConvDims) {
    let (h, w) = (d.h, d.w);
    let plane = h * w;
    for_each_tap(d, |o, c, tap, dy, dx| {
        let wv = weight[tap];
        if wv == 0.0 {
            return;
        }
        let (y0, y1) = span(h, dy);
        let (x0, x1) = span(w, dx);
        for y in y0..y1 {
            let src = o * plane + y * w;
            let dst = c * plane + (y as isize + dy) as usize * w;
            let xs = (x0 as isize + dx) as usize;
            axpy(
                &mut dx_buf[dst + xs..dst + xs + (x1 - x0)],
                wv,
                &g[src + x0..src + x1],
            );
        }
    });
}

pub(crate) fn conv2d_grad_weight(g: &[f64], x: &[f64], dw: &mut [f64], d: &ConvDims) {
    let (h, w) = (d.h, d.w);
    let plane = h * w;
    for_each_tap(d, |o, c, tap, dy, dx| {
        let (y0, y1) = span(h, dy);
        let (x0, x1) = span(w, dx);
        let mut acc = 0.0;
        for y in y0..y1 {
            let gs = o * plane + y * w;
            let xs = c * plane + (y as isize + dy) as usize * w + (x0 as isize + dx) as usize;
            acc += dot(&g[gs + x0..gs + x1], &x[xs..xs + (x1 - x0)]);
        }
        dw[tap] += acc;
    });
}
