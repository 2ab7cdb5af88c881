#pragma once

// Raw dense kernels behind the tensor ops. Each kernel has a serial
// reference implementation and an OpenMP variant. The parallel variants
// split work over output elements only, so every element is accumulated
// in the same order as the serial reference and results are bit-identical
// for any thread count.

namespace evfuse::kernels {

// Process-wide kernel thread cap. 1 disables OpenMP dispatch.
int threads();
void set_threads(int n);

struct Conv2dDims {
    int c_in = 0, h_in = 0, w_in = 0;
    int c_out = 0, k = 0, stride = 1, pad = 0;
    int h_out = 0, w_out = 0;
};

// out = cross_correlation(in, w) + b; in: c_in*h_in*w_in, w: c_out*c_in*k*k.
void conv2d_forward_serial(const double* in, const double* w, const double* b,
                           double* out, const Conv2dDims& d);
void conv2d_forward(const double* in, const double* w, const double* b,
                    double* out, const Conv2dDims& d);

// din += conv_transpose(dout, w). din must be zero-initialized by the caller
// if plain assignment semantics are wanted.
void conv2d_dinput_serial(const double* dout, const double* w, double* din,
                          const Conv2dDims& d);
void conv2d_dinput(const double* dout, const double* w, double* din,
                   const Conv2dDims& d);

// dw += correlation(in, dout); db += row sums of dout.
void conv2d_dweight_serial(const double* dout, const double* in, double* dw,
                           double* db, const Conv2dDims& d);
void conv2d_dweight(const double* dout, const double* in, double* dw,
                    double* db, const Conv2dDims& d);

// Adaptive average pooling with the floor/ceil window partition.
void adaptive_avg_pool_forward_serial(const double* in, double* out,
                                      int c, int h, int w, int oh, int ow);
void adaptive_avg_pool_forward(const double* in, double* out,
                               int c, int h, int w, int oh, int ow);

// Bilinear interpolation, align_corners = false.
void upsample_bilinear_forward_serial(const double* in, double* out,
                                      int c, int h, int w, int oh, int ow);
void upsample_bilinear_forward(const double* in, double* out,
                               int c, int h, int w, int oh, int ow);

}  // namespace evfuse::kernels
