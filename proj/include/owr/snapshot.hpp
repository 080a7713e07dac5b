#pragma once

// Autoencoder parameter snapshot, a line-oriented text format:
//
//   owr-autoencoder 1
//   encoder <layer count>
//   layer <out_dim> <in_dim> <activation>
//   <out_dim rows of in_dim weights, row-major>
//   bias <out_dim values>
//   ...
//   decoder <layer count>
//   ...
//
// Values use the shortest decimal form that round-trips binary64 exactly.

#include "owr/neural_core.hpp"

#include <iosfwd>
#include <string>

namespace owr {

void save_autoencoder(std::ostream& out, const AutoencoderParams<double>& params);
AutoencoderParams<double> load_autoencoder(std::istream& in);

void save_autoencoder(const std::string& path, const AutoencoderParams<double>& params);
AutoencoderParams<double> load_autoencoder(const std::string& path);

}  // namespace owr
