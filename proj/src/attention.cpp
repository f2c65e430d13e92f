#include "couplegen/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace couplegen {

namespace {

void require_width(const TokenSeq& s, std::size_t d_model, const char* what)
{
    if (s.cols() != d_model || s.rows() == 0) {
        throw ShapeError(std::string(what) + ": expected n x " + std::to_string(d_model) +
                         " tokens with n >= 1, got " + s.shape_string());
    }
}

void require_theta(double theta, const char* op)
{
    if (!(theta >= 0.0 && theta <= 1.0)) {
        throw DomainError(std::string(op) + ": theta must lie in [0, 1], got " +
                          std::to_string(theta));
    }
}

} // namespace

void AttentionWeights::check() const
{
    const std::size_t d = w_q.rows();
    for (const Matrix* m : {&w_q, &w_k, &w_v, &w_o}) {
        if (m->rows() != d || m->cols() != d || d == 0) {
            throw ShapeError("AttentionWeights: projections must be square d x d, got " +
                             m->shape_string());
        }
    }
}

NormConst::NormConst(double value) : value_(value)
{
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw DomainError("NormConst: value must be positive and finite");
    }
}

NormConst NormConst::joint(std::size_t d_text, std::size_t d_img)
{
    return NormConst(std::sqrt(static_cast<double>(d_text + d_img)));
}

NormConst NormConst::concat(std::size_t d_concat)
{
    return NormConst(std::sqrt(static_cast<double>(d_concat)));
}

AttentionResult scaled_dot_product_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                             const std::vector<bool>& key_masked, NormConst norm)
{
    if (k.rows() != v.rows()) {
        throw ShapeError("attention: key count " + k.shape_string() + " vs value count " +
                         v.shape_string());
    }
    if (!key_masked.empty() && key_masked.size() != k.rows()) {
        throw ShapeError("attention: mask length does not match key count");
    }
    Matrix scores = matmul_transposed(q, k);
    const double denom = norm.value();
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        auto row = scores.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            row[j] = (!key_masked.empty() && key_masked[j])
                         ? -std::numeric_limits<double>::infinity()
                         : row[j] / denom;
        }
    }
    AttentionResult result;
    result.weights = softmax_rows(scores);
    result.output = matmul(result.weights, v);
    return result;
}

StreamState joint_attention(const StreamState& state, const AttentionWeights& w, NormConst norm)
{
    w.check();
    require_width(state.text, w.d_model(), "joint_attention text");
    require_width(state.image, w.d_model(), "joint_attention image");

    const Matrix q = vstack(matmul(state.text, w.w_q), matmul(state.image, w.w_q));
    const Matrix k = vstack(matmul(state.text, w.w_k), matmul(state.image, w.w_k));
    const Matrix v = vstack(matmul(state.text, w.w_v), matmul(state.image, w.w_v));
    const Matrix out = scaled_dot_product_attention(q, k, v, {}, norm).output;

    const std::size_t nt = state.text.rows();
    return {slice_rows(out, 0, nt), slice_rows(out, nt, state.image.rows())};
}

CoupledStreamState coupled_qkv_attention(const CoupledStreamState& state,
                                         const AttentionWeights& w, double theta, NormConst norm)
{
    require_theta(theta, "coupled_qkv_attention");
    w.check();
    require_width(state.background, w.d_model(), "coupled_qkv_attention background");
    require_width(state.entity, w.d_model(), "coupled_qkv_attention entity");
    require_width(state.image, w.d_model(), "coupled_qkv_attention image");

    const double bg_scale = 1.0 - theta;
    const double ent_scale = theta;

    const Matrix* streams[] = {&state.background, &state.entity, &state.image};
    std::vector<Matrix> qs, ks, vs;
    for (const Matrix* s : streams) {
        qs.push_back(matmul(*s, w.w_q));
        ks.push_back(matmul(*s, w.w_k));
        vs.push_back(matmul(*s, w.w_v));
    }
    ks[0] = scaled(ks[0], bg_scale);
    ks[1] = scaled(ks[1], ent_scale);

    const Matrix* qp[] = {&qs[0], &qs[1], &qs[2]};
    const Matrix* kp[] = {&ks[0], &ks[1], &ks[2]};
    const Matrix* vp[] = {&vs[0], &vs[1], &vs[2]};

    const std::size_t nb = state.background.rows();
    const std::size_t ne = state.entity.rows();
    const std::size_t ni = state.image.rows();
    std::vector<bool> masked(nb + ne + ni, false);
    if (bg_scale == 0.0) {
        std::fill(masked.begin(), masked.begin() + static_cast<std::ptrdiff_t>(nb), true);
    }
    if (ent_scale == 0.0) {
        std::fill(masked.begin() + static_cast<std::ptrdiff_t>(nb),
                  masked.begin() + static_cast<std::ptrdiff_t>(nb + ne), true);
    }

    const Matrix out = scaled_dot_product_attention(vstack(qp), vstack(kp), vstack(vp), masked, norm)
                           .output;
    return {slice_rows(out, 0, nb), slice_rows(out, nb, ne), slice_rows(out, nb + ne, ni)};
}

StreamState branch_attention(const TokenSeq& text, const TokenSeq& image, const AttentionWeights& w,
                             NormConst norm)
{
    w.check();
    require_width(text, w.d_model(), "branch_attention text");
    require_width(image, w.d_model(), "branch_attention image");

    const Matrix x = vstack(text, image);
    const Matrix out =
        scaled_dot_product_attention(matmul(x, w.w_q), matmul(x, w.w_k), matmul(x, w.w_v), {}, norm)
            .output;
    return {slice_rows(out, 0, text.rows()), slice_rows(out, text.rows(), image.rows())};
}

TokenSeq merge_image_states(const TokenSeq& img_ent, const TokenSeq& img_bg, double theta)
{
    require_theta(theta, "merge_image_states");
    if (img_ent.rows() != img_bg.rows() || img_ent.cols() != img_bg.cols()) {
        throw ShapeError("merge_image_states: shape mismatch " + img_ent.shape_string() + " vs " +
                         img_bg.shape_string());
    }
    if (theta == 1.0) {
        return img_ent;
    }
    if (theta == 0.0) {
        return img_bg;
    }
    TokenSeq out(img_ent.rows(), img_ent.cols());
    auto dst = out.data();
    auto a = img_ent.data();
    auto b = img_bg.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = theta * a[i] + (1.0 - theta) * b[i];
    }
    return out;
}

} // namespace couplegen
