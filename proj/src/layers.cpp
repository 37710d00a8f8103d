#include "voxrl/layers.hpp"

#include <stdexcept>

namespace voxrl::nn {

namespace {

int g_num_threads = 0;  // 0 = pick from hardware

int default_threads() {
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template <typename T>
T dot(const T* a, const T* b, std::int64_t n) {
    T acc = T(0);
#pragma omp simd reduction(+ : acc)
    for (std::int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

// Four simultaneous dot products sharing one pass over x.
template <typename T>
void dot4(const T* a0, const T* a1, const T* a2, const T* a3, const T* x, std::int64_t n,
          T out[4]) {
    T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
#pragma omp simd reduction(+ : s0, s1, s2, s3)
    for (std::int64_t i = 0; i < n; ++i) {
        const T xi = x[i];
        s0 += a0[i] * xi;
        s1 += a1[i] * xi;
        s2 += a2[i] * xi;
        s3 += a3[i] * xi;
    }
    out[0] = s0;
    out[1] = s1;
    out[2] = s2;
    out[3] = s3;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::int64_t n) {
#pragma omp simd
    for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// y += a0*x0 + a1*x1 + a2*x2 + a3*x3 in one pass over y.
template <typename T>
void axpy4(T a0, const T* x0, T a1, const T* x1, T a2, const T* x2, T a3, const T* x3, T* y,
           std::int64_t n) {
#pragma omp simd
    for (std::int64_t i = 0; i < n; ++i)
        y[i] += a0 * x0[i] + a1 * x1[i] + a2 * x2[i] + a3 * x3[i];
}

// C[M,N] = A[M,K] * B[N,K]^T (+ per-row bias), rows of C owned per worker.
template <typename T>
void gemm_rowdot(const T* A, const T* B, T* C, int M, int N, std::int64_t K, const T* bias) {
    const int mblocks = (M + 3) / 4;
    parallel_for(mblocks, [&](std::int64_t mb) {
        const int m0 = static_cast<int>(mb) * 4;
        const int mcnt = std::min(4, M - m0);
        if (mcnt == 4) {
            const T* a0 = A + std::int64_t(m0) * K;
            const T* a1 = a0 + K;
            const T* a2 = a1 + K;
            const T* a3 = a2 + K;
            for (int n = 0; n < N; ++n) {
                T s[4];
                dot4(a0, a1, a2, a3, B + std::int64_t(n) * K, K, s);
                for (int r = 0; r < 4; ++r)
                    C[std::int64_t(m0 + r) * N + n] = s[r] + (bias ? bias[m0 + r] : T(0));
            }
        } else {
            for (int r = 0; r < mcnt; ++r) {
                const T* a = A + std::int64_t(m0 + r) * K;
                for (int n = 0; n < N; ++n)
                    C[std::int64_t(m0 + r) * N + n] =
                        dot(a, B + std::int64_t(n) * K, K) + (bias ? bias[m0 + r] : T(0));
            }
        }
    });
}

}  // namespace

void set_num_threads(int n) { g_num_threads = n; }

int num_threads() {
    if (g_num_threads > 0) return g_num_threads;
    return default_threads();
}

void Conv3dSpec::validate() const {
    if (in_channels < 1 || out_channels < 1)
        throw std::invalid_argument("conv3d: channel counts must be >= 1");
    for (int i = 0; i < 3; ++i) {
        if (kernel[i] < 1) throw std::invalid_argument("conv3d: kernel dims must be >= 1");
        if (stride[i] < 1) throw std::invalid_argument("conv3d: stride dims must be >= 1");
        if (padding[i] < 0) throw std::invalid_argument("conv3d: padding dims must be >= 0");
    }
}

std::array<int, 3> Conv3dSpec::output_dims(const std::array<int, 3>& in_dhw) const {
    validate();
    std::array<int, 3> out{};
    for (int i = 0; i < 3; ++i) {
        const int n = in_dhw[i] + 2 * padding[i] - kernel[i];
        out[i] = n < 0 ? 0 : n / stride[i] + 1;
        if (out[i] < 1)
            throw std::invalid_argument("conv3d: output axis " + std::to_string(i) +
                                        " collapses below 1 for input " +
                                        std::to_string(in_dhw[i]));
    }
    return out;
}

template <typename T>
Conv3d<T>::Conv3d(const Conv3dSpec& spec, Rng& rng) : spec_(spec) {
    spec_.validate();
    const int kvol = spec_.kernel[0] * spec_.kernel[1] * spec_.kernel[2];
    const int fan_in = spec_.in_channels * kvol;
    const int fan_out = spec_.out_channels * kvol;
    weight_ = glorot_init<T>({spec_.out_channels, spec_.in_channels, spec_.kernel[0],
                              spec_.kernel[1], spec_.kernel[2]},
                             fan_in, fan_out, rng);
    bias_ = TensorT<T>({spec_.out_channels});
}

// The conv kernels lower to im2col + GEMM: col_[n,k] holds the receptive
// field of output position n with k ordered (ic, kd, kh, kw) to match the
// weight layout, zeros where the field overlaps padding.
template <typename T>
const TensorT<T>& Conv3d<T>::forward(const TensorT<T>& input) {
    if (input.shape.size() != 4 || input.shape[0] != spec_.in_channels)
        throw std::invalid_argument("conv3d: input must be [C_in, D, H, W]");
    const int D = input.shape[1], H = input.shape[2], W = input.shape[3];
    const auto out_dims = spec_.output_dims({D, H, W});
    const int OD = out_dims[0], OH = out_dims[1], OW = out_dims[2];
    const int KD = spec_.kernel[0], KH = spec_.kernel[1], KW = spec_.kernel[2];
    const int SD = spec_.stride[0], SH = spec_.stride[1], SW = spec_.stride[2];
    const int PD = spec_.padding[0], PH = spec_.padding[1], PW = spec_.padding[2];

    input_ = input;
    if (output_.shape != std::vector<int>{spec_.out_channels, OD, OH, OW})
        output_ = TensorT<T>({spec_.out_channels, OD, OH, OW});

    const std::int64_t N = std::int64_t(OD) * OH * OW;
    const std::int64_t K = std::int64_t(spec_.in_channels) * KD * KH * KW;
    if (col_.numel() != N * K) col_ = TensorT<T>({int(N), int(K)});

    const T* in = input_.data.data();
    T* col = col_.data.data();
    parallel_for(N, [&](std::int64_t n) {
        const int od = int(n / (OH * OW));
        const int oh = int((n / OW) % OH);
        const int ow = int(n % OW);
        T* dst = col + n * K;
        std::int64_t k = 0;
        for (int ic = 0; ic < spec_.in_channels; ++ic) {
            const T* ichan = in + std::int64_t(ic) * D * H * W;
            for (int kd = 0; kd < KD; ++kd) {
                const int id = od * SD + kd - PD;
                const bool drow = id >= 0 && id < D;
                for (int kh = 0; kh < KH; ++kh) {
                    const int ih = oh * SH + kh - PH;
                    if (!drow || ih < 0 || ih >= H) {
                        for (int kw = 0; kw < KW; ++kw) dst[k++] = T(0);
                        continue;
                    }
                    const T* irow = ichan + (std::int64_t(id) * H + ih) * W;
                    const int iw0 = ow * SW - PW;
                    if (iw0 >= 0 && iw0 + KW <= W) {
                        for (int kw = 0; kw < KW; ++kw) dst[k++] = irow[iw0 + kw];
                    } else {
                        for (int kw = 0; kw < KW; ++kw) {
                            const int iw = iw0 + kw;
                            dst[k++] = (iw >= 0 && iw < W) ? irow[iw] : T(0);
                        }
                    }
                }
            }
        }
    });

    gemm_rowdot(weight_.data.data(), col, output_.data.data(), spec_.out_channels, int(N), K,
                bias_.data.data());
    return output_;
}

template <typename T>
const TensorT<T>& Conv3d<T>::backward(const TensorT<T>& grad_out) {
    if (grad_out.shape != output_.shape)
        throw std::invalid_argument("conv3d backward: grad shape mismatch");
    weight_.ensure_grad();
    bias_.ensure_grad();
    const int D = input_.shape[1], H = input_.shape[2], W = input_.shape[3];
    const int OD = output_.shape[1], OH = output_.shape[2], OW = output_.shape[3];
    const int KD = spec_.kernel[0], KH = spec_.kernel[1], KW = spec_.kernel[2];
    const int SD = spec_.stride[0], SH = spec_.stride[1], SW = spec_.stride[2];
    const int PD = spec_.padding[0], PH = spec_.padding[1], PW = spec_.padding[2];

    const std::int64_t N = std::int64_t(OD) * OH * OW;
    const std::int64_t K = std::int64_t(spec_.in_channels) * KD * KH * KW;
    const int M = spec_.out_channels;
    const T* go = grad_out.data.data();
    const T* col = col_.data.data();

    // dW[m,:] += sum_n go[m,n] * col[n,:]; each m owned by one worker.
    parallel_for(M, [&](std::int64_t m) {
        const T* gm = go + m * N;
        T* wg = weight_.grad.data() + m * K;
        T bacc = T(0);
        std::int64_t n = 0;
        for (; n + 4 <= N; n += 4) {
            axpy4(gm[n], col + n * K, gm[n + 1], col + (n + 1) * K, gm[n + 2],
                  col + (n + 2) * K, gm[n + 3], col + (n + 3) * K, wg, K);
            bacc += gm[n] + gm[n + 1] + gm[n + 2] + gm[n + 3];
        }
        for (; n < N; ++n) {
            axpy(gm[n], col + n * K, wg, K);
            bacc += gm[n];
        }
        bias_.grad[std::size_t(m)] += bacc;
    });

    if (!needs_input_grad_) {
        grad_input_ = TensorT<T>();
        return grad_input_;
    }

    // dcol[n,:] = sum_m go[m,n] * W[m,:], then scatter back onto the input.
    if (dcol_.numel() != N * K) dcol_ = TensorT<T>({int(N), int(K)});
    T* dcol = dcol_.data.data();
    const T* wts = weight_.data.data();
    parallel_for(N, [&](std::int64_t n) {
        T* dn = dcol + n * K;
        std::fill(dn, dn + K, T(0));
        int m = 0;
        for (; m + 4 <= M; m += 4) {
            axpy4(go[std::int64_t(m) * N + n], wts + std::int64_t(m) * K,
                  go[std::int64_t(m + 1) * N + n], wts + std::int64_t(m + 1) * K,
                  go[std::int64_t(m + 2) * N + n], wts + std::int64_t(m + 2) * K,
                  go[std::int64_t(m + 3) * N + n], wts + std::int64_t(m + 3) * K, dn, K);
        }
        for (; m < M; ++m) axpy(go[std::int64_t(m) * N + n], wts + std::int64_t(m) * K, dn, K);
    });

    if (grad_input_.shape != input_.shape) grad_input_ = TensorT<T>(input_.shape);
    std::fill(grad_input_.data.begin(), grad_input_.data.end(), T(0));
    T* gi = grad_input_.data.data();
    for (std::int64_t n = 0; n < N; ++n) {
        const int od = int(n / (OH * OW));
        const int oh = int((n / OW) % OH);
        const int ow = int(n % OW);
        const T* dn = dcol + n * K;
        std::int64_t k = 0;
        for (int ic = 0; ic < spec_.in_channels; ++ic) {
            T* gichan = gi + std::int64_t(ic) * D * H * W;
            for (int kd = 0; kd < KD; ++kd) {
                const int id = od * SD + kd - PD;
                const bool drow = id >= 0 && id < D;
                for (int kh = 0; kh < KH; ++kh) {
                    const int ih = oh * SH + kh - PH;
                    if (!drow || ih < 0 || ih >= H) {
                        k += KW;
                        continue;
                    }
                    T* girow = gichan + (std::int64_t(id) * H + ih) * W;
                    for (int kw = 0; kw < KW; ++kw, ++k) {
                        const int iw = ow * SW + kw - PW;
                        if (iw >= 0 && iw < W) girow[iw] += dn[k];
                    }
                }
            }
        }
    }
    return grad_input_;
}

template <typename T>
Dense<T>::Dense(int in, int out, Activation act, Rng& rng) : in_(in), out_(out), act_(act) {
    if (in < 1 || out < 1) throw std::invalid_argument("dense: feature counts must be >= 1");
    weight_ = glorot_init<T>({out, in}, in, out, rng);
    bias_ = TensorT<T>({out});
    preact_ = TensorT<T>({out});
    output_ = TensorT<T>({out});
}

template <typename T>
const TensorT<T>& Dense<T>::forward(const TensorT<T>& input) {
    if (input.numel() != in_)
        throw std::invalid_argument("dense: input has " + std::to_string(input.numel()) +
                                    " elements, layer expects " + std::to_string(in_));
    input_ = input;
    gemm_rowdot(weight_.data.data(), input_.data.data(), preact_.data.data(), out_, 1, in_,
                bias_.data.data());
    for (int i = 0; i < out_; ++i)
        output_.data[std::size_t(i)] = activate(act_, preact_.data[std::size_t(i)]);
    return output_;
}

template <typename T>
const TensorT<T>& Dense<T>::backward(const TensorT<T>& grad_out) {
    if (grad_out.numel() != out_)
        throw std::invalid_argument("dense backward: grad shape mismatch");
    weight_.ensure_grad();
    bias_.ensure_grad();

    std::vector<T> dz(static_cast<std::size_t>(out_));
    for (int i = 0; i < out_; ++i)
        dz[std::size_t(i)] = grad_out.data[std::size_t(i)] *
                             activate_grad(act_, preact_.data[std::size_t(i)],
                                           output_.data[std::size_t(i)]);

    const T* x = input_.data.data();
    parallel_for(out_, [&](std::int64_t i) {
        bias_.grad[std::size_t(i)] += dz[std::size_t(i)];
        axpy(dz[std::size_t(i)], x, weight_.grad.data() + i * in_, in_);
    });

    if (!needs_input_grad_) {
        grad_input_ = TensorT<T>();
        return grad_input_;
    }

    if (grad_input_.shape != input_.shape) grad_input_ = TensorT<T>(input_.shape);
    std::fill(grad_input_.data.begin(), grad_input_.data.end(), T(0));
    T* gi = grad_input_.data.data();
    const T* wts = weight_.data.data();
    const int nt = num_threads();
    const auto accumulate = [&](int lo, int hi) {
        int i = 0;
        for (; i + 4 <= out_; i += 4)
            axpy4(dz[std::size_t(i)], wts + std::int64_t(i) * in_ + lo, dz[std::size_t(i + 1)],
                  wts + std::int64_t(i + 1) * in_ + lo, dz[std::size_t(i + 2)],
                  wts + std::int64_t(i + 2) * in_ + lo, dz[std::size_t(i + 3)],
                  wts + std::int64_t(i + 3) * in_ + lo, gi + lo, hi - lo);
        for (; i < out_; ++i) axpy(dz[std::size_t(i)], wts + std::int64_t(i) * in_ + lo, gi + lo, hi - lo);
    };
    if (nt > 1 && std::int64_t(in_) * out_ > 65536) {
        // Column-chunked so each input index has a single writer.
        const int chunk = (in_ + nt - 1) / nt;
        parallel_for(nt, [&](std::int64_t ci) {
            const int lo = int(ci) * chunk;
            const int hi = std::min(in_, lo + chunk);
            if (lo < hi) accumulate(lo, hi);
        });
    } else {
        accumulate(0, in_);
    }
    return grad_input_;
}

template <typename T>
const TensorT<T>& Elementwise<T>::forward(const TensorT<T>& input) {
    input_ = input;
    if (output_.shape != input.shape) output_ = TensorT<T>(input.shape);
    const std::size_t n = input.data.size();
    for (std::size_t i = 0; i < n; ++i) output_.data[i] = activate(act_, input.data[i]);
    return output_;
}

template <typename T>
const TensorT<T>& Elementwise<T>::backward(const TensorT<T>& grad_out) {
    if (grad_out.shape != output_.shape)
        throw std::invalid_argument("elementwise backward: grad shape mismatch");
    if (grad_input_.shape != input_.shape) grad_input_ = TensorT<T>(input_.shape);
    const std::size_t n = input_.data.size();
    for (std::size_t i = 0; i < n; ++i)
        grad_input_.data[i] =
            grad_out.data[i] * activate_grad(act_, input_.data[i], output_.data[i]);
    return grad_input_;
}

template class Conv3d<float>;
template class Conv3d<double>;
template class Dense<float>;
template class Dense<double>;
template class Elementwise<float>;
template class Elementwise<double>;

}  // namespace voxrl::nn
