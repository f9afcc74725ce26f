// SPDX-License-Identifier: Apache-2.0
#include "rinv/diffusion/denoiser.hpp"

#include <cstring>
#include <cmath>
#include <map>
#include <sstream>

#include "rinv/errors.hpp"
#include "rinv/io.hpp"

namespace rinv::diffusion {
namespace {

using nn::ImageShape;
using nn::Mat;

constexpr std::string_view kCheckpointMagic = "RINVDNZ 1";

Mat* slot(Network::Gradients* grads, std::size_t i) { return grads != nullptr ? &(*grads)[i] : nullptr; }

/// Time-conditioned convolutional encoder-decoder with three resolution
/// levels and skip connections. The step embedding enters additively as a
/// per-channel bias at each level.
class UNet final : public Network {
 public:
  UNet(const Architecture& arch, std::uint64_t seed) : arch_(arch) {
    std::mt19937_64 rng(seed);
    const auto [c1, c2, c3] = arch.widths;
    const int hidden = 2 * arch.temb_dim;
    in_ = nn::Conv3x3(1, c1, rng);
    conv1_ = nn::Conv3x3(c1, c1, rng);
    conv2_ = nn::Conv3x3(c1, c2, rng);
    conv3_ = nn::Conv3x3(c2, c3, rng);
    conv3b_ = nn::Conv3x3(c3, c3, rng);
    conv4_ = nn::Conv3x3(c3 + c2, c2, rng);
    conv5_ = nn::Conv3x3(c2 + c1, c1, rng);
    out_ = nn::Conv3x3(c1, 1, rng, 0.0f);
    temb_ = nn::Dense(arch.temb_dim, hidden, rng);
    tb1_ = nn::Dense(hidden, c1, rng);
    tb2_ = nn::Dense(hidden, c2, rng);
    tb3_ = nn::Dense(hidden, c3, rng);
  }

  const Architecture& architecture() const override { return arch_; }

  struct UNetTape final : Tape {
    ImageShape s1, s2, s3;
    Mat e0, e1pre, e1;
    Mat cols_in, h1, cols1, h1b, cols2, h2, cols3, h3, cols3b, h3b, cols4, h4, cols5, h5, cols_out;
  };

  Mat forward(const Mat& z, std::span<const float> steps, std::unique_ptr<Tape>* tape) const override {
    auto tp = std::make_unique<UNetTape>();
    UNetTape& k = *tp;
    const int n = static_cast<int>(z.cols());
    k.s1 = {n, arch_.h, arch_.w};
    k.s2 = k.s1.half();
    k.s3 = k.s2.half();
    const Mat x = Eigen::Map<const Mat>(z.data(), k.s1.rows(), 1);

    k.e0 = nn::timestep_embedding(steps, arch_.temb_dim);
    k.e1pre = temb_.forward(k.e0);
    k.e1 = nn::silu(k.e1pre);

    k.h1 = in_.forward(x, k.s1, k.cols_in);
    nn::add_item_bias(k.h1, tb1_.forward(k.e1), k.s1);
    k.h1b = conv1_.forward(nn::silu(k.h1), k.s1, k.cols1);
    const Mat skip1 = nn::silu(k.h1b);

    k.h2 = conv2_.forward(nn::avg_pool2(skip1, k.s1), k.s2, k.cols2);
    nn::add_item_bias(k.h2, tb2_.forward(k.e1), k.s2);
    const Mat skip2 = nn::silu(k.h2);

    k.h3 = conv3_.forward(nn::avg_pool2(skip2, k.s2), k.s3, k.cols3);
    nn::add_item_bias(k.h3, tb3_.forward(k.e1), k.s3);
    k.h3b = conv3b_.forward(nn::silu(k.h3), k.s3, k.cols3b);

    Mat cat2(k.s2.rows(), arch_.widths[2] + arch_.widths[1]);
    cat2 << nn::upsample2(nn::silu(k.h3b), k.s3), skip2;
    k.h4 = conv4_.forward(cat2, k.s2, k.cols4);

    Mat cat1(k.s1.rows(), arch_.widths[1] + arch_.widths[0]);
    cat1 << nn::upsample2(nn::silu(k.h4), k.s2), skip1;
    k.h5 = conv5_.forward(cat1, k.s1, k.cols5);

    Mat out = out_.forward(nn::silu(k.h5), k.s1, k.cols_out);
    if (tape != nullptr) *tape = std::move(tp);
    return Eigen::Map<const Mat>(out.data(), arch_.h * arch_.w, n);
  }

  Mat backward(const Tape& base, const Mat& grad, Gradients* grads) const override {
    const auto& k = dynamic_cast<const UNetTape&>(base);
    const auto [c1, c2, c3] = arch_.widths;
    const Mat g = Eigen::Map<const Mat>(grad.data(), k.s1.rows(), 1);

    const Mat g_a5 = out_.backward(k.cols_out, g, k.s1, slot(grads, 14), slot(grads, 15));
    const Mat g_cat1 = conv5_.backward(k.cols5, nn::silu_backward(k.h5, g_a5), k.s1, slot(grads, 12), slot(grads, 13));
    Mat g_skip1 = g_cat1.rightCols(c1);
    const Mat g_a4 = nn::upsample2_backward(g_cat1.leftCols(c2), k.s2);
    const Mat g_cat2 = conv4_.backward(k.cols4, nn::silu_backward(k.h4, g_a4), k.s2, slot(grads, 10), slot(grads, 11));
    Mat g_skip2 = g_cat2.rightCols(c2);
    const Mat g_a3b = nn::upsample2_backward(g_cat2.leftCols(c3), k.s3);
    const Mat g_a3 = conv3b_.backward(k.cols3b, nn::silu_backward(k.h3b, g_a3b), k.s3, slot(grads, 8), slot(grads, 9));
    const Mat g_h3 = nn::silu_backward(k.h3, g_a3);
    const Mat g_d3 = conv3_.backward(k.cols3, g_h3, k.s3, slot(grads, 6), slot(grads, 7));
    g_skip2 += nn::avg_pool2_backward(g_d3, k.s2);
    const Mat g_h2 = nn::silu_backward(k.h2, g_skip2);
    const Mat g_d2 = conv2_.backward(k.cols2, g_h2, k.s2, slot(grads, 4), slot(grads, 5));
    g_skip1 += nn::avg_pool2_backward(g_d2, k.s1);
    const Mat g_a1 = conv1_.backward(k.cols1, nn::silu_backward(k.h1b, g_skip1), k.s1, slot(grads, 2), slot(grads, 3));
    const Mat g_h1 = nn::silu_backward(k.h1, g_a1);
    const Mat g_x = in_.backward(k.cols_in, g_h1, k.s1, slot(grads, 0), slot(grads, 1));

    if (grads != nullptr) {
      Mat g_e1 = tb1_.backward(k.e1, nn::item_bias_backward(g_h1, k.s1), slot(grads, 18), slot(grads, 19));
      g_e1 += tb2_.backward(k.e1, nn::item_bias_backward(g_h2, k.s2), slot(grads, 20), slot(grads, 21));
      g_e1 += tb3_.backward(k.e1, nn::item_bias_backward(g_h3, k.s3), slot(grads, 22), slot(grads, 23));
      temb_.backward(k.e0, nn::silu_backward(k.e1pre, g_e1), slot(grads, 16), slot(grads, 17));
    }
    return Eigen::Map<const Mat>(g_x.data(), arch_.h * arch_.w, grad.cols());
  }

  std::vector<std::pair<std::string, Mat*>> parameters() override {
    std::vector<std::pair<std::string, Mat*>> out;
    auto add = [&](const std::string& name, auto& layer) {
      out.emplace_back(name + ".weight", &layer.weight);
      out.emplace_back(name + ".bias", &layer.bias);
    };
    add("conv_in", in_);
    add("conv1", conv1_);
    add("conv2", conv2_);
    add("conv3", conv3_);
    add("conv3b", conv3b_);
    add("conv4", conv4_);
    add("conv5", conv5_);
    add("conv_out", out_);
    add("temb", temb_);
    add("temb_level1", tb1_);
    add("temb_level2", tb2_);
    add("temb_level3", tb3_);
    return out;
  }

 private:
  Architecture arch_;
  nn::Conv3x3 in_, conv1_, conv2_, conv3_, conv3b_, conv4_, conv5_, out_;
  nn::Dense temb_, tb1_, tb2_, tb3_;
};

/// Two hidden fully connected layers over the flattened latent and the step
/// embedding.
class Mlp final : public Network {
 public:
  Mlp(const Architecture& arch, std::uint64_t seed) : arch_(arch) {
    std::mt19937_64 rng(seed);
    const int P = arch.h * arch.w;
    l1_ = nn::Dense(P + arch.temb_dim, arch.hidden, rng);
    l2_ = nn::Dense(arch.hidden, arch.hidden, rng);
    l3_ = nn::Dense(arch.hidden, P, rng, 0.0f);
  }

  const Architecture& architecture() const override { return arch_; }

  struct MlpTape final : Tape {
    Mat x, h1, a1, h2, a2;
  };

  Mat forward(const Mat& z, std::span<const float> steps, std::unique_ptr<Tape>* tape) const override {
    auto tp = std::make_unique<MlpTape>();
    const Eigen::Index P = z.rows();
    tp->x.resize(z.cols(), P + arch_.temb_dim);
    tp->x << z.transpose(), nn::timestep_embedding(steps, arch_.temb_dim);
    tp->h1 = l1_.forward(tp->x);
    tp->a1 = nn::silu(tp->h1);
    tp->h2 = l2_.forward(tp->a1);
    tp->a2 = nn::silu(tp->h2);
    Mat out = l3_.forward(tp->a2).transpose();
    if (tape != nullptr) *tape = std::move(tp);
    return out;
  }

  Mat backward(const Tape& base, const Mat& grad, Gradients* grads) const override {
    const auto& k = dynamic_cast<const MlpTape&>(base);
    const Mat g_a2 = l3_.backward(k.a2, grad.transpose(), slot(grads, 4), slot(grads, 5));
    const Mat g_a1 = l2_.backward(k.a1, nn::silu_backward(k.h2, g_a2), slot(grads, 2), slot(grads, 3));
    const Mat g_x = l1_.backward(k.x, nn::silu_backward(k.h1, g_a1), slot(grads, 0), slot(grads, 1));
    return g_x.leftCols(grad.rows()).transpose();
  }

  std::vector<std::pair<std::string, Mat*>> parameters() override {
    return {{"fc1.weight", &l1_.weight}, {"fc1.bias", &l1_.bias}, {"fc2.weight", &l2_.weight},
            {"fc2.bias", &l2_.bias},     {"fc3.weight", &l3_.weight}, {"fc3.bias", &l3_.bias}};
  }

 private:
  Architecture arch_;
  nn::Dense l1_, l2_, l3_;
};

class NetworkLinearization final : public Linearization {
 public:
  NetworkLinearization(const Network& net, std::unique_ptr<Network::Tape> tape, OutputMap map)
      : net_(net), tape_(std::move(tape)), map_(map) {}

  Eigen::MatrixXd vjp(const Eigen::MatrixXd& v) const override {
    const Architecture& a = net_.architecture();
    const Mat vf = (map_.b * v).cast<float>();
    const Mat g = net_.backward(*tape_, Eigen::Map<const Mat>(vf.data(), a.h * a.w, 1), nullptr);
    Eigen::MatrixXd out = Eigen::Map<const Mat>(g.data(), a.h, a.w).cast<double>();
    if (map_.a != 0.0) out += map_.a * v;
    return out;
  }

 private:
  const Network& net_;
  std::unique_ptr<Network::Tape> tape_;
  OutputMap map_;
};

std::map<std::string, std::string> parse_fields(std::string_view text, std::string& head) {
  std::istringstream in{std::string(text)};
  in >> head;
  std::map<std::string, std::string> fields;
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw IoError("malformed descriptor token '" + tok + "'");
    fields[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return fields;
}

int field_int(const std::map<std::string, std::string>& f, const std::string& key) {
  const auto it = f.find(key);
  if (it == f.end()) throw IoError("descriptor missing '" + key + "'");
  return std::stoi(it->second);
}

}  // namespace

OutputMap output_map(OutputParam param, double alpha_bar) {
  if (param == OutputParam::kEps) return {};
  const double s = std::sqrt(1.0 - alpha_bar);
  return {1.0 / s, -std::sqrt(alpha_bar) / s};
}

Architecture Architecture::for_latent(int h, int w) {
  Architecture a;
  a.h = h;
  a.w = w;
  a.kind = unet_fits(h, w) ? ArchKind::kUNet : ArchKind::kMlp;
  return a;
}

std::string describe(const Architecture& a) {
  std::string s = a.kind == ArchKind::kUNet ? "unet" : "mlp";
  s += " h=" + std::to_string(a.h) + " w=" + std::to_string(a.w);
  if (a.kind == ArchKind::kUNet) {
    s += " widths=" + std::to_string(a.widths[0]) + "," + std::to_string(a.widths[1]) + "," +
         std::to_string(a.widths[2]);
  } else {
    s += " hidden=" + std::to_string(a.hidden);
  }
  s += " temb=" + std::to_string(a.temb_dim);
  if (a.output == OutputParam::kX0) s += " out=x0";
  return s;
}

Architecture parse_architecture(std::string_view text) {
  std::string head;
  const auto f = parse_fields(text, head);
  Architecture a;
  if (head == "unet") {
    a.kind = ArchKind::kUNet;
    const auto it = f.find("widths");
    if (it == f.end()) throw IoError("descriptor missing 'widths'");
    char sep = 0;
    std::istringstream ws(it->second);
    if (!(ws >> a.widths[0] >> sep >> a.widths[1] >> sep >> a.widths[2])) throw IoError("malformed widths");
  } else if (head == "mlp") {
    a.kind = ArchKind::kMlp;
    a.hidden = field_int(f, "hidden");
  } else {
    throw IoError("unknown architecture '" + head + "'");
  }
  a.h = field_int(f, "h");
  a.w = field_int(f, "w");
  a.temb_dim = field_int(f, "temb");
  if (const auto it = f.find("out"); it != f.end()) {
    if (it->second == "x0") {
      a.output = OutputParam::kX0;
    } else if (it->second != "eps") {
      throw IoError("unknown output parameterization '" + it->second + "'");
    }
  }
  return a;
}

std::vector<std::pair<std::string, const nn::Mat*>> Network::parameters() const {
  std::vector<std::pair<std::string, const nn::Mat*>> out;
  for (auto& [name, p] : const_cast<Network*>(this)->parameters()) out.emplace_back(name, p);
  return out;
}

Network::Gradients Network::zero_gradients() const {
  Gradients g;
  for (const auto& [name, p] : parameters()) g.push_back(nn::Mat::Zero(p->rows(), p->cols()));
  return g;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

std::unique_ptr<Network> make_network(const Architecture& arch, std::uint64_t seed) {
  if (arch.h < 1 || arch.w < 1 || arch.temb_dim < 2 || arch.temb_dim % 2 != 0) {
    throw ConfigError("invalid denoiser architecture: " + describe(arch));
  }
  if (arch.kind == ArchKind::kUNet) {
    if (!Architecture::unet_fits(arch.h, arch.w)) {
      throw ConfigError("U-Net needs latent sides divisible by 4 and >= 8, got " + std::to_string(arch.h) + "x" +
                        std::to_string(arch.w));
    }
    for (int c : arch.widths) {
      if (c < 1) throw ConfigError("U-Net widths must be positive");
    }
    return std::make_unique<UNet>(arch, seed);
  }
  if (arch.hidden < 1) throw ConfigError("MLP hidden width must be positive");
  return std::make_unique<Mlp>(arch, seed);
}

Denoiser::Denoiser(std::unique_ptr<Network> net, NoiseSchedule schedule, Codec codec)
    : net_(std::move(net)), schedule_(std::move(schedule)), codec_(codec) {}

Eigen::MatrixXd Denoiser::predict(const Eigen::MatrixXd& z, int t) const {
  Eigen::MatrixXd eps;
  linearize(z, t, eps);
  return eps;
}

std::unique_ptr<Linearization> Denoiser::linearize(const Eigen::MatrixXd& z, int t, Eigen::MatrixXd& eps) const {
  const Architecture& a = net_->architecture();
  if (z.rows() != a.h || z.cols() != a.w) {
    throw ConfigError("latent shape " + std::to_string(z.rows()) + "x" + std::to_string(z.cols()) +
                      " does not match denoiser " + std::to_string(a.h) + "x" + std::to_string(a.w));
  }
  const nn::Mat zf = z.cast<float>();
  const float step = static_cast<float>(t);
  std::unique_ptr<Network::Tape> tape;
  const nn::Mat out = net_->forward(Eigen::Map<const nn::Mat>(zf.data(), a.h * a.w, 1), {&step, 1}, &tape);
  const OutputMap map = output_map(a.output, schedule_.alpha_bar(t));
  eps = map.b * Eigen::Map<const nn::Mat>(out.data(), a.h, a.w).cast<double>();
  if (map.a != 0.0) eps += map.a * z;
  return std::make_unique<NetworkLinearization>(*net_, std::move(tape), map);
}

std::string Denoiser::encode() const {
  std::string out(kCheckpointMagic);
  out += '\n';
  out += describe(net_->architecture());
  out += " T=" + std::to_string(schedule_.T()) + " beta_min=" + io::format_double(schedule_.beta_min()) +
         " beta_max=" + io::format_double(schedule_.beta_max()) + " codec=" + std::string(codec_name(codec_.kind()));
  out += '\n';
  for (const auto& [name, p] : net_->parameters()) {
    out += name + "\n2\n" + std::to_string(p->rows()) + " " + std::to_string(p->cols()) + "\n";
    out.append(reinterpret_cast<const char*>(p->data()), static_cast<std::size_t>(p->size()) * sizeof(float));
  }
  return out;
}

Denoiser Denoiser::decode(std::string_view bytes) {
  std::size_t pos = 0;
  auto line = [&]() {
    const auto end = bytes.find('\n', pos);
    if (end == std::string_view::npos) throw IoError("truncated checkpoint");
    const std::string_view l = bytes.substr(pos, end - pos);
    pos = end + 1;
    return l;
  };
  if (line() != kCheckpointMagic) throw IoError("not a RINVDNZ 1 checkpoint");
  const std::string_view desc = line();
  std::string head;
  const auto fields = parse_fields(desc, head);
  const Architecture arch = parse_architecture(desc);
  const auto bmin = fields.find("beta_min");
  const auto bmax = fields.find("beta_max");
  const auto codec = fields.find("codec");
  if (bmin == fields.end() || bmax == fields.end() || codec == fields.end()) {
    throw IoError("checkpoint descriptor lacks schedule or codec");
  }
  NoiseSchedule sched = make_schedule(field_int(fields, "T"), std::stod(bmin->second), std::stod(bmax->second));
  Denoiser d(make_network(arch, 0), std::move(sched), Codec(parse_codec(codec->second)));
  for (auto& [name, p] : d.net_->parameters()) {
    if (line() != name) throw IoError("checkpoint block order mismatch at '" + name + "'");
    if (line() != "2") throw IoError("unsupported rank for '" + name + "'");
    std::istringstream dims{std::string(line())};
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    if (!(dims >> rows >> cols) || rows != p->rows() || cols != p->cols()) {
      throw IoError("dimension mismatch for '" + name + "'");
    }
    const std::size_t n = static_cast<std::size_t>(p->size()) * sizeof(float);
    if (bytes.size() - pos < n) throw IoError("truncated block '" + name + "'");
    std::memcpy(p->data(), bytes.data() + pos, n);
    pos += n;
  }
  if (pos != bytes.size()) throw IoError("trailing bytes in checkpoint");
  d.mark_trained();
  return d;
}

void Denoiser::save(const std::filesystem::path& path) const { io::write_file_atomic(path, encode()); }

Denoiser Denoiser::load(const std::filesystem::path& path) {
  try {
    return decode(io::read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace rinv::diffusion
