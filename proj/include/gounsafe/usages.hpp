#pragma once

#include <vector>

#include "gounsafe/ast.hpp"
#include "gounsafe/source.hpp"

namespace gounsafe {

enum class ApiMember {
    Pointer,
    Sizeof,
    Alignof,
    Offsetof,
    UintptrConversion,
};

const char* api_member_name(ApiMember m);

enum class ContextKind {
    FunctionBody,
    TypeDeclaration,
    GlobalVariable,
};

const char* context_kind_name(ContextKind k);

struct ContextRef {
    ContextKind kind = ContextKind::FunctionBody;
    const AstNode* node = nullptr;
};

struct UnsafeUsageSite {
    const SourceUnit* unit = nullptr;
    Span span;
    ApiMember api_member = ApiMember::Pointer;
    ContextRef context;
};

// Locates every unsafe mention in the unit: one site per qualified
// `unsafe.X` identifier (X one of Pointer, Sizeof, Alignof, Offsetof,
// alias-aware) plus one per uintptr(...) conversion whose operand involves
// an unsafe.Pointer expression. Sites come back ordered by span. A file
// that never imports unsafe yields no sites. Contexts are resolved
// eagerly; a site falling outside every supported context keeps a null
// context node.
std::vector<UnsafeUsageSite> find_unsafe_usages(const AstNode& root, const SourceUnit& unit);

// Returns the innermost function declaration, type declaration, or global
// variable declaration enclosing the site. Throws OrphanUsage when no such
// container exists.
ContextRef resolve_usage_context(const AstNode& root, const UnsafeUsageSite& site);

}  // namespace gounsafe
