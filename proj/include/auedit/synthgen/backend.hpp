#pragma once

// Adapter boundary for generators and AU labelers. The editing modules are
// written against these concepts; the synthetic generator and oracle are the
// implementations that ship.

#include <concepts>
#include <cstddef>

#include "auedit/core/types.hpp"
#include "auedit/synthgen/generator.hpp"

namespace auedit {

template <class G>
concept GeneratorBackend = requires(const G& g, const LatentVector& w, const ImageTensor& image_cot,
                                    const ActivationTensor& act) {
  { g.generate(w) } -> std::same_as<synth::GeneratorOutput>;
  { g.generate_grad(w, image_cot, act) } -> std::same_as<LatentVector>;
  { g.render(act) } -> std::same_as<ImageTensor>;
  { g.latent_dim() } -> std::convertible_to<std::size_t>;
};

template <class L>
concept AULabeler = requires(const L& l, const ImageTensor& im) {
  { l.measure(im) } -> std::same_as<AUVector>;
  { l.au_count() } -> std::convertible_to<std::size_t>;
};

}  // namespace auedit
