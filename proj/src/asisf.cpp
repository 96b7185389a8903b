#include "smdris/asisf.hpp"

#include <stdexcept>

namespace smdris {

Asisf::Asisf(ParamStore& store, const std::string& name, int input_channels, int reference_channels,
             int output_channels)
    : input_channels_(input_channels),
      reference_channels_(reference_channels),
      output_channels_(output_channels),
      proj_input_(store, name + ".proj_input", input_channels, output_channels, 1),
      proj_reference_(store, name + ".proj_reference", reference_channels, output_channels, 1),
      gate_(store, name + ".gate", 2 * output_channels, output_channels, 3, same_padding(3)) {}

Asisf::Projected Asisf::project(const Var& input, const Var& reference) const {
  if (input.shape().c != input_channels_) {
    throw std::invalid_argument("asisf: input has " + std::to_string(input.shape().c) +
                                " channels, expected " + std::to_string(input_channels_));
  }
  if (reference.shape().c != reference_channels_) {
    throw std::invalid_argument("asisf: reference has " + std::to_string(reference.shape().c) +
                                " channels, expected " + std::to_string(reference_channels_));
  }
  if (reference.shape().n != input.shape().n) {
    throw std::invalid_argument("asisf: batch mismatch between input and reference");
  }
  const Var ref = resize(reference, input.shape().h, input.shape().w, Resample::bilinear);
  return {proj_input_(input), proj_reference_(ref)};
}

Var Asisf::project_input(const Var& input) const { return proj_input_(input); }

Var Asisf::gate(const Var& input, const Var& reference) const {
  const Projected p = project(input, reference);
  return sigmoid(gate_(concat_channels({p.input, p.reference})));
}

Var Asisf::operator()(const Var& input, const Var& reference) const {
  const Projected p = project(input, reference);
  const Var g = sigmoid(gate_(concat_channels({p.input, p.reference})));
  return mul(p.input, g);
}

void Asisf::force_gate(Real bias) {
  gate_.zero();
  gate_.bias()->mutable_value().fill(bias);
}

}  // namespace smdris
