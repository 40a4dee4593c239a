#include "nemr/relation.hpp"

namespace nemr {

Backend parse_backend(std::string_view name) {
  if (name == "2N") return Backend::TwoNorm;
  if (name == "MLP") return Backend::Mlp;
  if (name == "VI") return Backend::Variational;
  throw ConfigError("unknown backend '" + std::string(name) + "' (expected 2N, MLP or VI)");
}

std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::TwoNorm: return "2N";
    case Backend::Mlp: return "MLP";
    case Backend::Variational: return "VI";
  }
  return "?";
}

}  // namespace nemr
