#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mcsfqf/common.hpp"
#include "mcsfqf/encoding.hpp"
#include "mcsfqf/neuron.hpp"

namespace mcsfqf {

// How state and fraction embeddings are combined:
//   McnPopulation  - multi-compartment fusion, population fraction spikes
//   LiPopulation   - LI product fusion, population fraction spikes
//   LiCosine       - LI product fusion, cosine fraction embedding
enum class FusionMode { McnPopulation, LiPopulation, LiCosine };

// Hard: binary spikes with reset. Smooth: the arctan spike stand-in with no
// reset, making the whole forward differentiable for gradient verification.
enum class SpikeMode { Hard, Smooth };

struct ConvShape {
    int in_c = 0, in_h = 0, in_w = 0;
    int k = 0, stride = 1, out_c = 0;
    int out_h() const { return (in_h - k) / stride + 1; }
    int out_w() const { return (in_w - k) / stride + 1; }
    int out_size() const { return out_c * out_h() * out_w(); }
    int in_size() const { return in_c * in_h * in_w; }
    int weight_rows() const { return out_c; }
    int weight_cols() const { return in_c * k * k; }
};

struct EncoderSpec {
    enum class Kind { Dense, Conv };
    Kind kind = Kind::Dense;
    // dense path
    int obs_dim = 0;
    int hidden = 128;
    int embed = 64;
    // conv path input geometry; layer geometry is fixed to
    // 8x8-32 stride 4, 4x4-64 stride 2, 3x3-64 stride 1
    int in_channels = 1, in_h = 0, in_w = 0;

    std::vector<ConvShape> conv_layers() const;
    int embed_dim() const;
    int obs_size() const;
    void validate() const;
};

struct NetConfig {
    EncoderSpec encoder;
    int n_fractions = 32;   // N
    int pop_m = 64;         // M
    double pop_sigma = 0.05;
    int n_mcn = 512;
    int n_hidden = 512;
    int n_actions = 0;
    int T = 8;
    FusionMode fusion = FusionMode::McnPopulation;
    SpikeMode spike_mode = SpikeMode::Hard;
    NeuronParams neuron;
    SurrogateCenter surrogate_center = SurrogateCenter::Threshold;
    double input_gain = 2.5;
    // Input scaling of the LIF stage between population spikes and the apical
    // synapses. The default makes the stage relay each incoming spike under
    // the default neuron constants.
    double pop_lif_gain = 2.5;
    std::uint64_t pop_seed = 0;

    int fuse_width() const { return n_mcn; }
    void validate() const;
};

struct NetworkParams {
    Mat enc_w1, enc_w2;             // dense encoder
    std::vector<Mat> conv;          // conv encoder, [out_c x in_c*k*k] each
    Mat w_f;                        // fraction proposal [N x embed]
    Mat w_b;                        // basal synapses   [embed x n_fuse]
    Mat w_a;                        // apical synapses  [M x n_fuse]
    Mat w_h;                        // hidden layer     [n_fuse x n_hidden]
    Mat w_l;                        // readout          [n_hidden x actions]

    static NetworkParams init(const NetConfig& cfg, std::uint64_t seed);
    static NetworkParams zeros(const NetConfig& cfg);

    void visit(const std::function<void(const std::string&, Mat&)>& fn);
    void visit(const std::function<void(const std::string&, const Mat&)>& fn) const;
};

struct FractionSet {
    Vec tau;      // N+1, tau[0]=0, tau[N]=1
    Vec tau_hat;  // N midpoints
    Vec p;        // N probabilities

    int n() const { return static_cast<int>(p.size()); }
    double entropy() const;
    void validate(double boundary_tol = 1e-6, double sum_tol = 1e-12) const;
};

FractionSet fractions_from_logits(const Vec& phi);
// phi_i = (1/T) sum_t W_f[i] . O_s[t], then softmax and cumulative sum.
FractionSet propose_fractions(const Mat& o_s, const Mat& w_f);

struct QuantileEstimate {
    Mat values;  // [N x actions] at tau_hat
    Vec q;       // [actions]
};

// q_a = sum_i (tau_{i+1} - tau_i) values(i, a)
Vec q_values(const FractionSet& fr, const Mat& values);

struct LayerTape {
    Mat u_pre;  // [T x n] pre-threshold potentials
    Mat out;    // [T x n] spikes (Hard) or smooth activations (Smooth)
};

struct FractionTape {
    SpikeTrain pop;   // raw population spikes (population modes)
    LayerTape stage;  // relay LIF on population spikes; cosine: out = tiled embedding
    Mat v_a;          // [T x n] apical dendrite trace (MCN) or LI group-a potentials
    LayerTape soma;   // MCN somatic potentials and output spikes
    Mat fused;        // [T x n] LI product trace (LI modes)
    LayerTape hidden;
};

struct TapeRecord {
    Vec obs;
    std::vector<LayerTape> enc;
    Mat x_b;  // [T x n] shared basal current
    Mat v_b;  // [T x n] basal dendrite trace (MCN) or LI group-b potentials
    FractionSet fractions;
    std::vector<FractionTape> frac;
    QuantileEstimate estimate;

    const Mat& o_s() const { return enc.back().out; }
};

// Encoder over T steps on a statically repeated observation.
void run_encoder(const Vec& obs, const NetworkParams& w, const NetConfig& cfg,
                 std::vector<LayerTape>& tapes);
SpikeTrain encode_state(const Vec& obs, const NetworkParams& w, const NetConfig& cfg);

// Standalone MCN fusion of a state train and one fraction train.
SpikeTrain mcn_fuse(const SpikeTrain& o_s, const SpikeTrain& s_tau, const Mat& w_b,
                    const Mat& w_a, const NeuronParams& p);

// Hidden LIF layer followed by the time-averaged linear readout.
Vec quantile_head(const SpikeTrain& s_m, const Mat& w_h, const Mat& w_l, const NeuronParams& p);

// Elementwise product of the two LI groups' potentials, per step.
Mat li_product_fuse(const SpikeTrain& o_s, const SpikeTrain& s_tau, const Mat& w_b,
                    const Mat& w_a, const NeuronParams& p);

// Algorithm: encode state, propose fractions, embed each midpoint, fuse,
// head, reduce to Q.
TapeRecord full_forward(const Vec& obs, const NetworkParams& w, const NetConfig& cfg);

// Same pipeline with the fraction set held fixed instead of proposed from the
// state. Gradient verification perturbs weights around a frozen fraction set
// so the finite differences probe exactly the differentiated paths.
TapeRecord full_forward_fixed_fractions(const Vec& obs, const NetworkParams& w,
                                        const NetConfig& cfg, const FractionSet& fr);

// Quantile values at arbitrary fractions, reusing the encoder output and
// basal trace already stored in the tape. Row per requested fraction.
Mat quantiles_at(const TapeRecord& tape, const NetworkParams& w, const NetConfig& cfg,
                 const Vec& taus, std::uint64_t tau_index_base);

// Re-runs the forward pass from the tape's stored inputs; used to assert the
// tape is sufficient to reproduce every potential bit-exactly.
TapeRecord replay_forward(const TapeRecord& tape, const NetworkParams& w, const NetConfig& cfg);

// Direct convolution helpers shared by the forward and backward passes.
void conv_forward(const ConvShape& s, const Mat& w, const double* in, double* out);
void conv_backward_weights(const ConvShape& s, const double* in, const double* gout, Mat& dw);
void conv_backward_input(const ConvShape& s, const Mat& w, const double* gout, double* gin);

}  // namespace mcsfqf
