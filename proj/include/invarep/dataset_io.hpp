#pragma once

#include <string>

#include "invarep/dataset.hpp"

namespace invarep {

// CSV persistence for datasets. The format is a header `domain,y,x0,...` (one
// x column per feature) followed by one row per sample, floats printed with
// 17 significant digits so that load(save(d)) == d bit for bit.
void save_dataset(const MultiDomainDataset& d, const std::string& path);

// Throws IoError when the file cannot be read and ParseError (naming the
// 1-based line) on any malformed header or row.
MultiDomainDataset load_dataset(const std::string& path);

}  // namespace invarep
