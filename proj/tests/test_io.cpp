#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"

using namespace moverstayer;

namespace {

DataError::Code ingest_error(const std::string& text) {
  std::istringstream in(text);
  try {
    read_panel_csv(in);
  } catch (const DataError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error for:\n" << text;
  return DataError::Code::io;
}

}  // namespace

TEST(ReadPanelCsv, SingleSubject) {
  std::istringstream in("id,t,y,delta,x_1,z_1\n7,0,0,1,0.5,2\n");
  const auto data = read_panel_csv(in);
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data.fixed_dim(), 1);
  EXPECT_EQ(data.varying_dim(), 1);
  EXPECT_EQ(data[0].id, "7");
  EXPECT_EQ(data[0].delta, 1);
  EXPECT_EQ(data[0].z.rows(), 1);
  EXPECT_EQ(data[0].z(0, 0), 2.0);
}

TEST(ReadPanelCsv, SkipsCommentsAndBlankLines) {
  std::istringstream in(
      "# produced elsewhere\nid,t,y,delta,x_1,z_1\n\na,0,1,0,1,2\na,1,1,0,1,3\n");
  const auto data = read_panel_csv(in);
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data[0].z(1, 0), 3.0);
}

TEST(ReadPanelCsv, RoundTripIsByteIdentical) {
  auto cfg = builtin_setting(Setting::s1);
  cfg.n = 500;
  const auto sim = simulate_dataset(cfg);
  std::ostringstream first;
  write_panel_csv(first, sim.data, {"moverstayer test"});
  std::istringstream in(first.str());
  const auto back = read_panel_csv(in);
  std::ostringstream second;
  write_panel_csv(second, back, {"moverstayer test"});
  EXPECT_EQ(first.str(), second.str());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].x, sim.data[i].x);
    EXPECT_EQ(back[i].z, sim.data[i].z);
  }
}

TEST(ReadPanelCsv, MissingTimeNamesSubjectAndGap) {
  std::istringstream in(
      "id,t,y,delta,x_1,z_1\nok,0,0,0,1,1\nbob,0,2,0,1,1\nbob,2,2,0,1,1\n");
  try {
    read_panel_csv(in);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), DataError::Code::missing_time);
    EXPECT_EQ(e.subject(), "bob");
    EXPECT_EQ(e.row(), 4u);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bob"), std::string::npos);
    EXPECT_NE(msg.find("expected t = 1"), std::string::npos);
  }
}

TEST(ReadPanelCsv, DistinctValidationErrors) {
  using C = DataError::Code;
  EXPECT_EQ(ingest_error("id,t,y,delta,x_1\na,0,1,0,1\n"), C::missing_time);
  EXPECT_EQ(ingest_error("id,t,y,delta,x_1\na,0,0,0,1,9\n"), C::ragged_row);
  EXPECT_EQ(ingest_error("id,t,y,delta,x_1\na,0,0,2,1\n"), C::non_binary_delta);
  EXPECT_EQ(ingest_error("id,t,y,delta,x_1\na,0,1,0,1\na,1,1,0,2\n"),
            C::inconsistent_fixed_covariates);
  EXPECT_EQ(ingest_error("id,t,y,delta,x_1\na,0,1,0,1\na,1,1,1,1\n"),
            C::inconsistent_subject);
  EXPECT_EQ(ingest_error("id,t,y,delta,x_1\na,0,0,0,1\nb,0,0,0,1\na,0,0,0,1\n"),
            C::inconsistent_subject);
  EXPECT_EQ(ingest_error("id,time,y,delta\n"), C::bad_header);
  EXPECT_EQ(ingest_error("id,t,y,delta,x_2\n"), C::bad_header);
  EXPECT_EQ(ingest_error("id,t,y,delta,x_1\na,0,0,0,abc\n"), C::bad_number);
  EXPECT_EQ(ingest_error("id,t,y,delta,x_1\n"), C::empty_dataset);
  EXPECT_EQ(ingest_error(""), C::bad_header);
}

TEST(ReadPanelCsv, MissingFileIsAnIoError) {
  try {
    read_panel_csv(std::string("/nonexistent/panel.csv"));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), DataError::Code::io);
  }
}

TEST(WriteCsv, LatentAndOccupancyLayouts) {
  auto cfg = builtin_setting(Setting::s1);
  cfg.n = 20;
  const auto sim = simulate_dataset(cfg);
  std::ostringstream latent, occ;
  write_latent_csv(latent, sim.data, sim.truth);
  write_occupancy_csv(occ, occupancy_table(sim.truth, sim.data), {"x"});
  EXPECT_EQ(latent.str().rfind("id,b0,r,event,final_state\n", 0), 0u);
  EXPECT_EQ(occ.str().rfind("# x\nt,state1,state2,state3,observed_movers,censored\n", 0), 0u);
  int lines = 0;
  for (char c : latent.str()) lines += c == '\n';
  EXPECT_EQ(lines, 21);
}
