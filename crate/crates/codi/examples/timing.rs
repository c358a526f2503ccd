use codi::data::DatasetSpec;
use codi::decoder::{DecoderConfig, DecoderNet};
use codi::distill::{distill_student, relax, train_e2e, DistillPlan, RelaxationSpec, Role};
use codi::sensing::{BinarizeMode, Modality, CassiEncoder, SensingOperator};

fn main() {
    let op = SensingOperator::Cassi(CassiEncoder::seeded(32, 32, 8, 1, BinarizeMode::Heaviside, 13).unwrap());
    let mut cfg = DecoderConfig::for_modality(Modality::Cassi, 32, 8, 14);
    cfg.base_filters = 8;
    let mut spec = DatasetSpec::defaults(Modality::Cassi, 5);
    spec.train = 32; spec.val = 8; spec.test = 8;
    let data = codi::data::build(&spec).unwrap();

    let teacher_plan = DistillPlan::defaults(Modality::Cassi, 150, 7);
    let plan = DistillPlan::defaults(Modality::Cassi, 80, 7);
    let teacher_op = relax(&op, &RelaxationSpec::Cassi { teacher_snapshots: 2 }, 21).unwrap();
    let mut tcfg = cfg.clone(); tcfg.seed = 22;
    let t0 = std::time::Instant::now();
    let teacher = train_e2e(teacher_op, DecoderNet::new(tcfg).unwrap(), &data, &teacher_plan, Role::Teacher).unwrap();
    println!("teacher150 m2: {:.2} in {:?}", teacher.final_val_psnr().unwrap(), t0.elapsed());
    let net = DecoderNet::new(cfg.clone()).unwrap();
    let baseline = train_e2e(op.clone(), net.clone(), &data, &plan, Role::Baseline).unwrap();
    let student = distill_student(op, net, &teacher, &data, &plan).unwrap();
    println!("cassi m2-teacher: teacher {:.2} student {:.2} baseline {:.2}",
        teacher.final_val_psnr().unwrap(), student.final_val_psnr().unwrap(), baseline.final_val_psnr().unwrap());
}
