#ifndef UCG_HARNESS_CLI_HPP
#define UCG_HARNESS_CLI_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ucg/dataset.hpp"
#include "ucg/models.hpp"

namespace ucg::harness {

/// Subcommands gen-data, train-attr, train-gan, sample, latent-hist,
/// eval-diversity and grad-check. Returns 0 on success, 2 on argument or
/// configuration errors and 1 on runtime failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "gender=1,ethnicity=2,age_bin=3" -> one label per attribute, in
/// attribute order. Every attribute must be named exactly once.
std::vector<std::size_t> parse_attribute_labels(std::string_view text,
                                                const std::vector<models::AttributeSpec>& attributes);

/// points.csv when present, otherwise an image dataset directory.
Dataset load_data_dir(const std::filesystem::path& dir, const models::ModelConfig& model);

}  // namespace ucg::harness

#endif  // UCG_HARNESS_CLI_HPP
