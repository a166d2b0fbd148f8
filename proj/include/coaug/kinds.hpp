#pragma once

#include <string>

namespace coaug {

/// Where a text in a composite batch came from. Drives prompts and advantage scales.
enum class SourceKind { Query, RelevantDoc, IrrelevantDoc };

inline bool is_document(SourceKind kind) noexcept { return kind != SourceKind::Query; }

std::string to_string(SourceKind kind);
SourceKind source_kind_from_string(const std::string& name);

}  // namespace coaug
