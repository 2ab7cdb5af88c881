#include "evfuse/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace evfuse::kernels {

namespace {

std::atomic<int> g_threads{
#ifdef _OPENMP
    0  // 0 = use omp_get_max_threads() lazily
#else
    1
#endif
};

inline int resolve_threads() {
    int t = g_threads.load(std::memory_order_relaxed);
#ifdef _OPENMP
    if (t <= 0) return omp_get_max_threads();
#endif
    return t <= 0 ? 1 : t;
}

// ceil(a / s) for s > 0, only used under a max(0, .) clamp.
inline int ceil_div(int a, int s) { return (a >= 0) ? (a + s - 1) / s : a / s; }

// One output row (co, oy). Accumulation order over (ci, ky, kx) is fixed, so
// the result does not depend on how rows are distributed across threads.
inline void conv_fwd_row(const double* in, const double* w, const double* b,
                         double* out, const Conv2dDims& d, int co, int oy) {
    double* row = out + (static_cast<long>(co) * d.h_out + oy) * d.w_out;
    const double bias = b ? b[co] : 0.0;
    for (int ox = 0; ox < d.w_out; ++ox) row[ox] = bias;
    for (int ci = 0; ci < d.c_in; ++ci) {
        for (int ky = 0; ky < d.k; ++ky) {
            const int iy = oy * d.stride - d.pad + ky;
            if (iy < 0 || iy >= d.h_in) continue;
            const double* inrow = in + (static_cast<long>(ci) * d.h_in + iy) * d.w_in;
            const double* wrow = w + ((static_cast<long>(co) * d.c_in + ci) * d.k + ky) * d.k;
            for (int kx = 0; kx < d.k; ++kx) {
                const double wv = wrow[kx];
                const int lo = std::max(0, ceil_div(d.pad - kx, d.stride));
                const int hi = std::min(d.w_out - 1, (d.w_in - 1 + d.pad - kx) / d.stride);
                int ix = lo * d.stride - d.pad + kx;
                for (int ox = lo; ox <= hi; ++ox, ix += d.stride) row[ox] += wv * inrow[ix];
            }
        }
    }
}

inline void conv_din_row(const double* dout, const double* w, double* din,
                         const Conv2dDims& d, int ci, int iy) {
    double* row = din + (static_cast<long>(ci) * d.h_in + iy) * d.w_in;
    for (int co = 0; co < d.c_out; ++co) {
        for (int ky = 0; ky < d.k; ++ky) {
            const int t = iy + d.pad - ky;
            if (t < 0 || t % d.stride != 0) continue;
            const int oy = t / d.stride;
            if (oy >= d.h_out) continue;
            const double* dorow = dout + (static_cast<long>(co) * d.h_out + oy) * d.w_out;
            const double* wrow = w + ((static_cast<long>(co) * d.c_in + ci) * d.k + ky) * d.k;
            for (int kx = 0; kx < d.k; ++kx) {
                const double wv = wrow[kx];
                const int lo = std::max(0, ceil_div(d.pad - kx, d.stride));
                const int hi = std::min(d.w_out - 1, (d.w_in - 1 + d.pad - kx) / d.stride);
                int ix = lo * d.stride - d.pad + kx;
                for (int ox = lo; ox <= hi; ++ox, ix += d.stride) row[ix] += wv * dorow[ox];
            }
        }
    }
}

inline void conv_dw_cell(const double* dout, const double* in, double* dw,
                         const Conv2dDims& d, int co, int ci) {
    for (int ky = 0; ky < d.k; ++ky) {
        const int oy_lo = std::max(0, ceil_div(d.pad - ky, d.stride));
        const int oy_hi = std::min(d.h_out - 1, (d.h_in - 1 + d.pad - ky) / d.stride);
        for (int kx = 0; kx < d.k; ++kx) {
            const int ox_lo = std::max(0, ceil_div(d.pad - kx, d.stride));
            const int ox_hi = std::min(d.w_out - 1, (d.w_in - 1 + d.pad - kx) / d.stride);
            double acc = 0.0;
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                const int iy = oy * d.stride - d.pad + ky;
                const double* dorow = dout + (static_cast<long>(co) * d.h_out + oy) * d.w_out;
                const double* inrow = in + (static_cast<long>(ci) * d.h_in + iy) * d.w_in;
                int ix = ox_lo * d.stride - d.pad + kx;
                for (int ox = ox_lo; ox <= ox_hi; ++ox, ix += d.stride) acc += dorow[ox] * inrow[ix];
            }
            dw[((static_cast<long>(co) * d.c_in + ci) * d.k + ky) * d.k + kx] += acc;
        }
    }
}

inline void pool_cell(const double* in, double* out, int c, int h, int w, int oh, int ow,
                      int ch, int i, int j) {
    const int y0 = (i * h) / oh;
    const int y1 = ((i + 1) * h + oh - 1) / oh;
    const int x0 = (j * w) / ow;
    const int x1 = ((j + 1) * w + ow - 1) / ow;
    double acc = 0.0;
    for (int y = y0; y < y1; ++y) {
        const double* row = in + (static_cast<long>(ch) * h + y) * w;
        for (int x = x0; x < x1; ++x) acc += row[x];
    }
    out[(static_cast<long>(ch) * oh + i) * ow + j] = acc / ((y1 - y0) * (x1 - x0));
}

inline void upsample_row(const double* in, double* out, int c, int h, int w, int oh, int ow,
                         int ch, int oy) {
    const double sy = static_cast<double>(h) / oh;
    const double sx = static_cast<double>(w) / ow;
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::max(0.0, std::min(fy, static_cast<double>(h - 1)));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    const double* row0 = in + (static_cast<long>(ch) * h + y0) * w;
    const double* row1 = in + (static_cast<long>(ch) * h + y1) * w;
    double* orow = out + (static_cast<long>(ch) * oh + oy) * ow;
    for (int ox = 0; ox < ow; ++ox) {
        double fx = (ox + 0.5) * sx - 0.5;
        fx = std::max(0.0, std::min(fx, static_cast<double>(w - 1)));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        const double top = row0[x0] * (1.0 - wx) + row0[x1] * wx;
        const double bot = row1[x0] * (1.0 - wx) + row1[x1] * wx;
        orow[ox] = top * (1.0 - wy) + bot * wy;
    }
}

}  // namespace

int threads() { return resolve_threads(); }

void set_threads(int n) { g_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed); }

void conv2d_forward_serial(const double* in, const double* w, const double* b,
                           double* out, const Conv2dDims& d) {
    for (int co = 0; co < d.c_out; ++co)
        for (int oy = 0; oy < d.h_out; ++oy) conv_fwd_row(in, w, b, out, d, co, oy);
}

void conv2d_forward(const double* in, const double* w, const double* b,
                    double* out, const Conv2dDims& d) {
    const int nt = resolve_threads();
    if (nt <= 1 || static_cast<long>(d.c_out) * d.h_out < 2) {
        conv2d_forward_serial(in, w, b, out, d);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt)
    for (int co = 0; co < d.c_out; ++co)
        for (int oy = 0; oy < d.h_out; ++oy) conv_fwd_row(in, w, b, out, d, co, oy);
#else
    conv2d_forward_serial(in, w, b, out, d);
#endif
}

void conv2d_dinput_serial(const double* dout, const double* w, double* din,
                          const Conv2dDims& d) {
    for (int ci = 0; ci < d.c_in; ++ci)
        for (int iy = 0; iy < d.h_in; ++iy) conv_din_row(dout, w, din, d, ci, iy);
}

void conv2d_dinput(const double* dout, const double* w, double* din, const Conv2dDims& d) {
    const int nt = resolve_threads();
    if (nt <= 1 || static_cast<long>(d.c_in) * d.h_in < 2) {
        conv2d_dinput_serial(dout, w, din, d);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt)
    for (int ci = 0; ci < d.c_in; ++ci)
        for (int iy = 0; iy < d.h_in; ++iy) conv_din_row(dout, w, din, d, ci, iy);
#else
    conv2d_dinput_serial(dout, w, din, d);
#endif
}

void conv2d_dweight_serial(const double* dout, const double* in, double* dw,
                           double* db, const Conv2dDims& d) {
    for (int co = 0; co < d.c_out; ++co)
        for (int ci = 0; ci < d.c_in; ++ci) conv_dw_cell(dout, in, dw, d, co, ci);
    if (db) {
        for (int co = 0; co < d.c_out; ++co) {
            const double* p = dout + static_cast<long>(co) * d.h_out * d.w_out;
            double acc = 0.0;
            for (long i = 0; i < static_cast<long>(d.h_out) * d.w_out; ++i) acc += p[i];
            db[co] += acc;
        }
    }
}

void conv2d_dweight(const double* dout, const double* in, double* dw, double* db,
                    const Conv2dDims& d) {
    const int nt = resolve_threads();
    if (nt <= 1 || static_cast<long>(d.c_out) * d.c_in < 2) {
        conv2d_dweight_serial(dout, in, dw, db, d);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt)
    for (int co = 0; co < d.c_out; ++co)
        for (int ci = 0; ci < d.c_in; ++ci) conv_dw_cell(dout, in, dw, d, co, ci);
    if (db) {
#pragma omp parallel for schedule(static) num_threads(nt)
        for (int co = 0; co < d.c_out; ++co) {
            const double* p = dout + static_cast<long>(co) * d.h_out * d.w_out;
            double acc = 0.0;
            for (long i = 0; i < static_cast<long>(d.h_out) * d.w_out; ++i) acc += p[i];
            db[co] += acc;
        }
    }
#else
    conv2d_dweight_serial(dout, in, dw, db, d);
#endif
}

void adaptive_avg_pool_forward_serial(const double* in, double* out,
                                      int c, int h, int w, int oh, int ow) {
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) pool_cell(in, out, c, h, w, oh, ow, ch, i, j);
}

void adaptive_avg_pool_forward(const double* in, double* out,
                               int c, int h, int w, int oh, int ow) {
    const int nt = resolve_threads();
    if (nt <= 1 || c < 2) {
        adaptive_avg_pool_forward_serial(in, out, c, h, w, oh, ow);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt)
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) pool_cell(in, out, c, h, w, oh, ow, ch, i, j);
#else
    adaptive_avg_pool_forward_serial(in, out, c, h, w, oh, ow);
#endif
}

void upsample_bilinear_forward_serial(const double* in, double* out,
                                      int c, int h, int w, int oh, int ow) {
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < oh; ++oy) upsample_row(in, out, c, h, w, oh, ow, ch, oy);
}

void upsample_bilinear_forward(const double* in, double* out,
                               int c, int h, int w, int oh, int ow) {
    const int nt = resolve_threads();
    if (nt <= 1 || static_cast<long>(c) * oh < 2) {
        upsample_bilinear_forward_serial(in, out, c, h, w, oh, ow);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt)
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < oh; ++oy) upsample_row(in, out, c, h, w, oh, ow, ch, oy);
#else
    upsample_bilinear_forward_serial(in, out, c, h, w, oh, ow);
#endif
}

}  // namespace evfuse::kernels
