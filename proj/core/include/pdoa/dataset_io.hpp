#pragma once

// JSON-lines serialization of offline datasets. The first line is a header
// {n_unconstrained, n_constrained, augmented, env_id}; every following line
// holds one trajectory {transitions: [{s, a, s2, r, c}, ...], pref}.
// Doubles round-trip exactly.

#include <iosfwd>
#include <string>

#include "pdoa/types.hpp"

namespace pdoa {

void write_dataset(const OfflineDataset& ds, std::ostream& out);
void write_dataset_file(const OfflineDataset& ds, const std::string& path);

OfflineDataset read_dataset(std::istream& in);
OfflineDataset read_dataset_file(const std::string& path);

std::string dataset_to_string(const OfflineDataset& ds);
OfflineDataset dataset_from_string(const std::string& text);

}  // namespace pdoa
