#include "b2d/pipeline/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "b2d/error.hpp"
#include "b2d/text.hpp"

namespace b2d {

namespace {

std::string num(double v) { return std::isnan(v) ? "" : text::format_double(v); }

std::string fixed_ns(std::int64_t ns, std::int64_t unit, int digits) {
  const bool neg = ns < 0;
  const auto a = neg ? -ns : ns;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%lld.%0*lld", neg ? "-" : "", static_cast<long long>(a / unit), digits,
                static_cast<long long>(a % unit));
  return buf;
}

}  // namespace

std::string ns_as_seconds(std::int64_t ns) { return fixed_ns(ns, 1000000000, 9); }
std::string ns_as_milliseconds(std::int64_t ns) { return fixed_ns(ns, 1000000, 6); }

std::string report_csv(const std::vector<RunReport>& reports) {
  std::ostringstream out;
  out << "fold,row,epoch,train_loss,train_acc,val_loss,val_acc,test_acc,test_precision,test_recall,test_f1,"
         "n_train,n_validation,n_test,config_hash,seed\n";
  for (const auto& r : reports) {
    for (const auto& e : r.epochs)
      out << r.fold << ",epoch," << e.epoch << ',' << num(e.train_loss) << ',' << num(e.train_acc) << ','
          << num(e.val_loss) << ',' << num(e.val_acc) << ",,,,,,,,,\n";
    const EpochRow last = r.epochs.empty() ? EpochRow{0, NAN, NAN, NAN, NAN} : r.epochs.back();
    out << r.fold << ",summary," << last.epoch << ',' << num(last.train_loss) << ',' << num(last.train_acc) << ','
        << num(last.val_loss) << ',' << num(last.val_acc) << ',' << num(r.test.accuracy) << ','
        << num(r.test.precision) << ',' << num(r.test.recall) << ',' << num(r.test.f1) << ',' << r.n_train << ','
        << r.n_validation << ',' << r.test.n << ',' << std::hex << r.config_hash << std::dec << ',' << r.seed << "\n";
  }
  return out.str();
}

std::string timing_csv(const std::vector<RunReport>& reports) {
  std::ostringstream out;
  out << "fold,train_s,test_s,n_test,test_ms_per_sample\n";
  for (const auto& r : reports)
    out << r.fold << ',' << ns_as_seconds(r.timing.train_ns) << ',' << ns_as_seconds(r.timing.test_ns) << ','
        << r.timing.n_test << ',' << ns_as_milliseconds(r.timing.test_ns_per_sample()) << "\n";
  return out.str();
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "mutation,fold,params,epochs,final_train_loss,final_val_acc,test_acc,test_precision,test_recall,test_f1\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    const EpochRow last = r.epochs.empty() ? EpochRow{0, NAN, NAN, NAN, NAN} : r.epochs.back();
    out << row.mutation_id << ',' << r.fold << ',' << row.params << ',' << r.epochs.size() << ','
        << num(last.train_loss) << ',' << num(last.val_acc) << ',' << num(r.test.accuracy) << ','
        << num(r.test.precision) << ',' << num(r.test.recall) << ',' << num(r.test.f1) << "\n";
  }
  return out.str();
}

std::string benchmark_csv(const BenchmarkResult& res) {
  std::ostringstream out;
  out << "run,train_s,test_s,n_test,test_ms_per_sample\n";
  for (std::size_t i = 0; i < res.runs.size(); ++i) {
    const auto& t = res.runs[i];
    out << i << ',' << ns_as_seconds(t.train_ns) << ',' << ns_as_seconds(t.test_ns) << ',' << t.n_test << ','
        << ns_as_milliseconds(t.test_ns_per_sample()) << "\n";
  }
  const auto& m = res.median;
  out << "median," << ns_as_seconds(m.train_ns) << ',' << ns_as_seconds(m.test_ns) << ',' << m.n_test << ','
      << ns_as_milliseconds(m.test_ns_per_sample()) << "\n";
  return out.str();
}

std::string confusion_text(const Confusion& c) {
  std::ostringstream out;
  out << "true\\pred  expert nonexpert control\n";
  const char* names[] = {"expert   ", "nonexpert", "control  "};
  for (int t = 0; t < kNumClasses; ++t) {
    out << names[t];
    for (int p = 0; p < kNumClasses; ++p) {
      const auto s = std::to_string(c[t][p]);
      out << std::string(p == 0 ? 8 - s.size() : 10 - s.size(), ' ') << s;
    }
    out << "\n";
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace b2d
