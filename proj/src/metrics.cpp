#include "mag/experiment.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mag/text_io.hpp"

namespace mag::harness {

std::string MetricsRecord::to_kv() const {
    std::ostringstream out;
    out << "iteration=" << iteration << " env_steps=" << env_steps
        << " eval_return=" << format_double(eval_return) << " eval_se=" << format_double(eval_se)
        << " eval_discounted=" << format_double(eval_discounted)
        << " eval_discounted_se=" << format_double(eval_discounted_se)
        << " model_nll=" << format_double(model_nll)
        << " predictor_mse=" << format_double(predictor_mse)
        << " planned_final_error=" << format_double(planned_final_error)
        << " greedy_final_error=" << format_double(greedy_final_error)
        << " bound_gap=" << format_double(bound_gap) << " bound_rhs=" << format_double(bound_rhs);
    return out.str();
}

std::string MetricsRecord::csv_header() {
    return "iteration,env_steps,eval_return,eval_se,eval_discounted,eval_discounted_se,"
           "model_nll,predictor_mse,planned_final_error,greedy_final_error,bound_gap,bound_rhs";
}

std::string MetricsRecord::to_csv_row() const {
    std::ostringstream out;
    out << iteration << ',' << env_steps << ',' << format_double(eval_return) << ','
        << format_double(eval_se) << ',' << format_double(eval_discounted) << ','
        << format_double(eval_discounted_se) << ',' << format_double(model_nll) << ','
        << format_double(predictor_mse) << ',' << format_double(planned_final_error) << ','
        << format_double(greedy_final_error) << ',' << format_double(bound_gap) << ','
        << format_double(bound_rhs);
    return out.str();
}

MetricsWriter::MetricsWriter(std::string out_dir)
    : kv_path_(out_dir + "/metrics.kv"), csv_path_(out_dir + "/metrics.csv") {}

void MetricsWriter::append(const MetricsRecord& rec) {
    const auto mode = started_ ? std::ios::app : std::ios::trunc;
    std::ofstream kv(kv_path_, mode);
    std::ofstream csv(csv_path_, mode);
    if (!kv || !csv) throw std::runtime_error("MetricsWriter: cannot open metrics files");
    if (!started_) csv << MetricsRecord::csv_header() << "\n";
    kv << rec.to_kv() << "\n";
    csv << rec.to_csv_row() << "\n";
    started_ = true;
}

}  // namespace mag::harness
