#pragma once

#include <memory>

#include "gounsafe/ast.hpp"
#include "gounsafe/source.hpp"

namespace gounsafe {

// Parses the supported Go subset. Constructs outside the subset degrade to
// opaque expr-stmt leaves carrying the raw source text; only token-level
// garbage raises ParseError. Fills unit.package_name on success.
std::unique_ptr<AstNode> parse_source(SourceUnit& unit);

}  // namespace gounsafe
