#include "coaug/kinds.hpp"

#include "coaug/error.hpp"

namespace coaug {

std::string to_string(SourceKind kind) {
    switch (kind) {
        case SourceKind::Query: return "query";
        case SourceKind::RelevantDoc: return "relevant-doc";
        case SourceKind::IrrelevantDoc: return "irrelevant-doc";
    }
    return "unknown";
}

SourceKind source_kind_from_string(const std::string& name) {
    if (name == "query") return SourceKind::Query;
    if (name == "relevant-doc") return SourceKind::RelevantDoc;
    if (name == "irrelevant-doc") return SourceKind::IrrelevantDoc;
    throw ConfigError("kind", "unknown source kind '" + name + "'");
}

}  // namespace coaug
