#pragma once

#include <string>

#include "smdris/nn.hpp"

namespace smdris {

/// Gates an input feature stream with a reference stream that may differ in
/// channel count and spatial extent.
///
/// The reference is bilinearly resized to the input's extent, both streams are
/// projected by 1x1 convolutions to `output_channels`, and a per-channel,
/// per-position gate sigmoid(conv3x3([P_in(x), P_ref(r)])) multiplies P_in(x).
class Asisf {
 public:
  Asisf() = default;
  Asisf(ParamStore& store, const std::string& name, int input_channels, int reference_channels,
        int output_channels);

  Var operator()(const Var& input, const Var& reference) const;
  Var gate(const Var& input, const Var& reference) const;
  Var project_input(const Var& input) const;

  int input_channels() const { return input_channels_; }
  int reference_channels() const { return reference_channels_; }
  int output_channels() const { return output_channels_; }

  // Zeroes the gate weights and sets every gate bias to `bias`, so the gate is
  // the constant sigmoid(bias). Used to pin the gate open (large +) or shut (large -).
  void force_gate(Real bias);
  Conv2d& gate_conv() { return gate_; }

 private:
  struct Projected {
    Var input;
    Var reference;
  };
  Projected project(const Var& input, const Var& reference) const;

  int input_channels_ = 0;
  int reference_channels_ = 0;
  int output_channels_ = 0;
  Conv2d proj_input_;
  Conv2d proj_reference_;
  Conv2d gate_;
};

}  // namespace smdris
