#include "owr/meta_characteristics.hpp"

#include "owr/text_io.hpp"

namespace owr {

std::string to_csv_row(const MetaFeatureRecord& r) {
  std::string row;
  for (double v : {r.cv_ap, r.cv_an, r.mycv, r.mu_ap, r.mu_an, r.sigma_ap, r.sigma_an, r.d_min}) {
    row += format_double(v);
    row += ',';
  }
  if (r.label) row += std::to_string(*r.label);
  row += ',';
  row += to_string(r.label_kind);
  row += ',';
  row += to_string(r.domain);
  row += ',';
  if (r.confidence) row += format_double(*r.confidence);
  return row;
}

MetaFeatureRecord parse_meta_csv_row(const std::string& line) {
  const auto f = split_csv_line(line);
  if (f.size() != 12) throw DataError("meta-feature row: expected 12 fields, got " + std::to_string(f.size()));
  MetaFeatureRecord r;
  double* numeric[] = {&r.cv_ap, &r.cv_an, &r.mycv, &r.mu_ap, &r.mu_an, &r.sigma_ap, &r.sigma_an, &r.d_min};
  for (int i = 0; i < 8; ++i) *numeric[i] = parse_double(f[static_cast<std::size_t>(i)]);
  if (!f[8].empty()) {
    const long label = parse_long(f[8]);
    if (label != 0 && label != 1) throw DataError("meta-feature row: label must be 0 or 1");
    r.label = static_cast<int>(label);
  }
  if (f[9] == "true_label")
    r.label_kind = LabelKind::true_label;
  else if (f[9] == "soft_label")
    r.label_kind = LabelKind::soft_label;
  else
    throw DataError("meta-feature row: unknown label_kind '" + f[9] + "'");
  r.domain = parse_domain(f[10]);
  if (!f[11].empty()) r.confidence = parse_double(f[11]);
  return r;
}

}  // namespace owr
