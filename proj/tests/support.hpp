#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "coaug/corpus.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh per-test scratch directory under the build tree.
inline fs::path scratch_dir(const std::string& name) {
    fs::path dir = fs::path(COAUG_TEST_TMP) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

inline void write_file(const fs::path& file, const std::string& content) {
    fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    out << content;
}

inline std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline coaug::corpus::SyntheticSpec small_spec() {
    coaug::corpus::SyntheticSpec s;
    s.n_topics = 2;
    s.n_queries = 8;
    s.n_docs = 24;
    s.query_vocab_size = 16;
    s.doc_vocab_size = 40;
    s.bridge_vocab_size = 4;
    s.doc_len = 6;
    s.query_len = 3;
    s.seed = 7;
    return s;
}

}  // namespace testing
