#include "owr/snapshot.hpp"

#include "owr/text_io.hpp"

#include <istream>
#include <ostream>
#include <sstream>

namespace owr {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::identity:
      break;
  }
  return "identity";
}

Activation parse_activation(const std::string& text) {
  if (text == "identity") return Activation::identity;
  if (text == "relu") return Activation::relu;
  if (text == "tanh") return Activation::tanh;
  throw DataError("unknown activation '" + text + "'");
}

namespace {

constexpr const char* kMagic = "owr-autoencoder";
constexpr int kVersion = 1;

void write_stack(std::ostream& out, const char* name, const LayerStack<double>& stack) {
  out << name << ' ' << stack.size() << '\n';
  for (const auto& layer : stack) {
    out << "layer " << layer.out_dim() << ' ' << layer.in_dim() << ' ' << to_string(layer.activation) << '\n';
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        if (c) out << ' ';
        out << format_double(layer.weights(r, c));
      }
      out << '\n';
    }
    out << "bias";
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out << ' ' << format_double(layer.bias(r));
    out << '\n';
  }
}

std::string next_token(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw DataError("autoencoder snapshot: unexpected end of file");
  return tok;
}

void expect(std::istream& in, const std::string& word) {
  const auto tok = next_token(in);
  if (tok != word) throw DataError("autoencoder snapshot: expected '" + word + "', found '" + tok + "'");
}

LayerStack<double> read_stack(std::istream& in, const char* name) {
  expect(in, name);
  const long count = parse_long(next_token(in));
  if (count <= 0 || count > 1024) throw DataError("autoencoder snapshot: bad layer count");
  LayerStack<double> stack;
  for (long l = 0; l < count; ++l) {
    expect(in, "layer");
    const long out_dim = parse_long(next_token(in));
    const long in_dim = parse_long(next_token(in));
    if (out_dim <= 0 || in_dim <= 0) throw DataError("autoencoder snapshot: bad layer dims");
    DenseLayer<double> layer;
    layer.activation = parse_activation(next_token(in));
    layer.weights.resize(out_dim, in_dim);
    for (long r = 0; r < out_dim; ++r)
      for (long c = 0; c < in_dim; ++c) layer.weights(r, c) = parse_double(next_token(in));
    expect(in, "bias");
    layer.bias.resize(out_dim);
    for (long r = 0; r < out_dim; ++r) layer.bias(r) = parse_double(next_token(in));
    stack.push_back(std::move(layer));
  }
  return stack;
}

}  // namespace

void save_autoencoder(std::ostream& out, const AutoencoderParams<double>& params) {
  params.validate();
  out << kMagic << ' ' << kVersion << '\n';
  write_stack(out, "encoder", params.encoder);
  write_stack(out, "decoder", params.decoder);
}

AutoencoderParams<double> load_autoencoder(std::istream& in) {
  expect(in, kMagic);
  if (parse_long(next_token(in)) != kVersion) throw DataError("autoencoder snapshot: unsupported version");
  AutoencoderParams<double> params;
  params.encoder = read_stack(in, "encoder");
  params.decoder = read_stack(in, "decoder");
  try {
    params.validate();
  } catch (const ShapeError& e) {
    throw DataError(std::string("autoencoder snapshot: ") + e.what());
  }
  return params;
}

void save_autoencoder(const std::string& path, const AutoencoderParams<double>& params) {
  std::ostringstream ss;
  save_autoencoder(ss, params);
  write_file(path, ss.str());
}

AutoencoderParams<double> load_autoencoder(const std::string& path) {
  std::istringstream ss(read_file(path));
  return load_autoencoder(ss);
}

}  // namespace owr
