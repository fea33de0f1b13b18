#pragma once

#include <optional>

#include "esrkit/ops.hpp"

namespace esrkit {

// Structural re-parameterization: multi-branch blocks that collapse into a
// single dense convolution with identical outputs. Everything here assumes
// stride 1, dilation 1, groups 1 and odd square-padding ("same") kernels;
// anything else is rejected up front.
//
// A seq branch (e.g. 1x1 expand -> 3x3 -> 1x1 restore) is evaluated by
// zero-padding its input once by half its total receptive field and then
// applying the convolutions unpadded. Padding in input space is what makes
// kernel-space fusion exact for arbitrary biases; padding between stages
// would instead zero out the first stage's bias along the border.

enum class FixedFilter { sobel_x, sobel_y, laplacian, hpf };

const char* fixed_filter_name(FixedFilter f);
std::optional<FixedFilter> fixed_filter_from_name(const std::string& name);

// The 3x3 stencil as a (1,1,3,3) tensor. sobel_x responds to horizontal
// gradients, sobel_y to vertical, laplacian is the 4-neighbour stencil, and
// hpf is the zero-sum high-pass mask [[-1,-2,-1],[-2,12,-2],[-1,-2,-1]]/16.
template <typename T>
TensorT<T> fixed_filter_kernel(FixedFilter f);

enum class BranchKind { conv, seq, identity, scaled_identity, fixed_filter };

template <typename T>
struct BranchSpecT {
    BranchKind kind = BranchKind::conv;
    ConvSpecT<T> conv;                 // conv
    std::vector<ConvSpecT<T>> seq;     // seq, applied left to right
    int channels = 0;                  // identity
    std::vector<T> gamma;              // scaled_identity, length C
    FixedFilter filter = FixedFilter::sobel_x;  // fixed_filter
    std::vector<T> scale;              // fixed_filter, per-channel, length C
    std::optional<ConvSpecT<T>> pre;   // fixed_filter, optional preceding 1x1

    int in_channels() const {
        switch (kind) {
            case BranchKind::conv: return conv.in_channels();
            case BranchKind::seq:
                require(!seq.empty(), "branch: seq branch has no convolutions");
                return seq.front().in_channels();
            case BranchKind::identity: return channels;
            case BranchKind::scaled_identity: return int(gamma.size());
            case BranchKind::fixed_filter:
                return pre ? pre->in_channels() : int(scale.size());
        }
        fail("branch: unknown kind");
    }
    int out_channels() const {
        switch (kind) {
            case BranchKind::conv: return conv.out_channels();
            case BranchKind::seq:
                require(!seq.empty(), "branch: seq branch has no convolutions");
                return seq.back().out_channels();
            case BranchKind::identity: return channels;
            case BranchKind::scaled_identity: return int(gamma.size());
            case BranchKind::fixed_filter: return int(scale.size());
        }
        fail("branch: unknown kind");
    }
};

template <typename T>
struct RepBlockSpecT {
    std::vector<BranchSpecT<T>> branches;  // summed
    int target_kh = 3, target_kw = 3;
};

using BranchSpec = BranchSpecT<float>;
using RepBlockSpec = RepBlockSpecT<float>;
using DBranchSpec = BranchSpecT<double>;
using DRepBlockSpec = RepBlockSpecT<double>;

// Collapses conv a followed by conv b into one kernel. Exactly one of the
// two may have spatial extent (the other must be 1x1). Biases are folded:
// the earlier bias is contracted through the later kernel.
template <typename T>
ConvSpecT<T> fuse_sequential(const ConvSpecT<T>& a, const ConvSpecT<T>& b);

// Sums parallel convolutions into one target_kh x target_kw kernel; smaller
// kernels are zero-padded outward around their centre, which requires the
// size difference to be even on each axis.
template <typename T>
ConvSpecT<T> fuse_parallel(const std::vector<ConvSpecT<T>>& branches, int target_kh,
                           int target_kw);

// Dirac kernel: conv2d(x, identity_to_kernel(C, k)) == x at same padding.
template <typename T>
ConvSpecT<T> identity_to_kernel(int channels, int k);

// Folds per-channel batch-norm statistics (gamma, beta, mean, var, eps)
// into the convolution's weight and bias.
template <typename T>
ConvSpecT<T> fold_batchnorm(const ConvSpecT<T>& conv, const std::vector<T>& gamma,
                            const std::vector<T>& beta, const std::vector<T>& mean,
                            const std::vector<T>& var, double eps);

// Low-rank adapter merge: returns W + X*Y where Y is the rank-r down
// projection (r, C_in, k, k) and X the 1x1 up projection (C_out, r, 1, 1).
template <typename T>
TensorT<T> merge_lora(const TensorT<T>& w_pt, const TensorT<T>& x_up, const TensorT<T>& y_down);

// Per-channel scaled fixed filter lowered from its depthwise form to a
// dense group-1 kernel (zero off the channel diagonal), optionally composed
// with a preceding 1x1 projection.
template <typename T>
ConvSpecT<T> embed_fixed_filter(FixedFilter f, int channels, const std::vector<T>& scale,
                                const std::optional<ConvSpecT<T>>& pre = std::nullopt);

// Lowers one branch to an equivalent target-sized convolution.
template <typename T>
ConvSpecT<T> lower_branch(const BranchSpecT<T>& br, int target_kh, int target_kw);

// Collapses the whole block into a single convolution.
template <typename T>
ConvSpecT<T> fuse_block(const RepBlockSpecT<T>& block);

// Reference multi-branch evaluation (sum of branch outputs), used to verify
// that fuse_block is lossless. Spatial dims are preserved.
template <typename T>
TensorT<T> forward_unfused(const TensorT<T>& x, const RepBlockSpecT<T>& block);

// Training-form parameter count of a branch: what the unfused structure
// stores (identity stores nothing, a fixed filter stores its 9 stencil
// entries plus the per-channel scale).
template <typename T>
std::int64_t branch_param_count(const BranchSpecT<T>& br);

#define ESRKIT_EXTERN_REPARAM(T)                                                             \
    extern template TensorT<T> fixed_filter_kernel<T>(FixedFilter);                         \
    extern template ConvSpecT<T> fuse_sequential<T>(const ConvSpecT<T>&, const ConvSpecT<T>&); \
    extern template ConvSpecT<T> fuse_parallel<T>(const std::vector<ConvSpecT<T>>&, int, int); \
    extern template ConvSpecT<T> identity_to_kernel<T>(int, int);                           \
    extern template ConvSpecT<T> fold_batchnorm<T>(const ConvSpecT<T>&, const std::vector<T>&, \
                                                   const std::vector<T>&, const std::vector<T>&, \
                                                   const std::vector<T>&, double);          \
    extern template TensorT<T> merge_lora<T>(const TensorT<T>&, const TensorT<T>&,          \
                                             const TensorT<T>&);                            \
    extern template ConvSpecT<T> embed_fixed_filter<T>(FixedFilter, int, const std::vector<T>&, \
                                                       const std::optional<ConvSpecT<T>>&); \
    extern template ConvSpecT<T> lower_branch<T>(const BranchSpecT<T>&, int, int);          \
    extern template ConvSpecT<T> fuse_block<T>(const RepBlockSpecT<T>&);                    \
    extern template TensorT<T> forward_unfused<T>(const TensorT<T>&, const RepBlockSpecT<T>&); \
    extern template std::int64_t branch_param_count<T>(const BranchSpecT<T>&);

ESRKIT_EXTERN_REPARAM(float)
ESRKIT_EXTERN_REPARAM(double)
#undef ESRKIT_EXTERN_REPARAM

}  // namespace esrkit
