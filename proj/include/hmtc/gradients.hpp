#pragma once

#include "hmtc/forward.hpp"

namespace hmtc {

// Reverse-mode gradient of (output_grad * network output) in all network
// weights, with the hard-max selections, the ReLU activation patterns and any
// clamp state frozen at their forward values (the almost-everywhere correct
// gradient; at kinks the derivative-0 branch is used). `trace` must come from
// network_forward_traced on the same (x, theta).
NetworkParams network_backward(const NetworkParams& theta, const ModelConfig& cfg, const ForwardTrace& trace,
                               double output_grad);

} // namespace hmtc
