#pragma once

#include <vector>

#include "couplegen/numerics.hpp"

namespace couplegen {

/// Text embedding and image hidden state entering one attention call.
struct StreamState {
    TokenSeq text;
    TokenSeq image;
};

/// Background, entity and image streams for the coupled variants.
struct CoupledStreamState {
    TokenSeq background;
    TokenSeq entity;
    TokenSeq image;
};

/// Single-head projections, each d_model x d_model. `w_o` is applied by the
/// enclosing block, not by the attention functions themselves.
struct AttentionWeights {
    Matrix w_q;
    Matrix w_k;
    Matrix w_v;
    Matrix w_o;

    std::size_t d_model() const { return w_q.rows(); }
    void check() const;
};

/// Positive denominator applied to every attention score.
class NormConst {
public:
    explicit NormConst(double value);

    /// sqrt(d_text + d_img), the denominator used by QKV-level attention.
    static NormConst joint(std::size_t d_text, std::size_t d_img);
    /// sqrt(d_concat), the denominator used by embedding-level attention.
    static NormConst concat(std::size_t d_concat);

    double value() const { return value_; }

private:
    double value_;
};

struct AttentionResult {
    Matrix output;
    Matrix weights; ///< row-stochastic, queries x keys
};

/// softmax(Q K^T / norm) V where `key_masked[j]` forces column j to -inf.
/// An empty mask means no columns are masked.
AttentionResult scaled_dot_product_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                             const std::vector<bool>& key_masked, NormConst norm);

/// QKV-level concatenation attention: per-stream projections, concatenated
/// along tokens, one softmax, split back into text and image.
StreamState joint_attention(const StreamState& state, const AttentionWeights& w, NormConst norm);

/// QKV-level attention over background, entity and image streams with keys
/// scaled by (1 - theta) for background and theta for entity. A stream whose
/// key scale is exactly zero has its key columns masked, which makes theta = 0
/// and theta = 1 reduce exactly to the two-stream joint attention.
CoupledStreamState coupled_qkv_attention(const CoupledStreamState& state,
                                         const AttentionWeights& w, double theta, NormConst norm);

/// Embedding-level concatenation attention: [text; image] is projected as one
/// sequence, attended, and split back.
StreamState branch_attention(const TokenSeq& text, const TokenSeq& image, const AttentionWeights& w,
                             NormConst norm);

/// theta * img_ent + (1 - theta) * img_bg. At theta 0 or 1 the selected branch
/// is returned bit-for-bit.
TokenSeq merge_image_states(const TokenSeq& img_ent, const TokenSeq& img_bg, double theta);

} // namespace couplegen
