mod common;

use std::collections::BTreeSet;

use d2t_core::corpus::{extract_reg_dataset, RegInstance, Triple};
use d2t_core::lexicalization::{bind_entities, Template, Token};
use d2t_core::reg::{only_names, realize_literal, reg_resolve, reg_train, RegConfig, RegModel, RegPolicy};
use d2t_core::Error;
use d2t_neural::NeuralError;

fn words(rt: &[Token<String>]) -> String {
    rt.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

fn drago_ordered() -> Vec<Triple> {
    vec![
        Triple::new("Massimo_Drago", "club", "S.S.D._Potenza_Calcio").unwrap(),
        Triple::new("Massimo_Drago", "club", "Calcio_Catania").unwrap(),
        Triple::new("A.C._Cesena", "manager", "Massimo_Drago").unwrap(),
    ]
}

fn drago_instances() -> Vec<RegInstance> {
    let reg = extract_reg_dataset(common::sample()).unwrap();
    reg.train.into_iter().filter(|i| i.meta.eid == "train/3/SportsTeam/Id9000").collect()
}

fn quick(epochs: usize) -> RegConfig {
    RegConfig {
        epochs,
        batch_size: 10,
        dropout: 0.0,
        patience: 1000,
        learning_rate: 5e-3,
        ..RegConfig::desk()
    }
}

#[test]
fn only_names_strips_underscores_and_quotes() {
    assert_eq!(only_names("Alan_Bean"), "Alan Bean");
    assert_eq!(only_names("\"Test_pilot\""), "Test pilot");
    assert_eq!(only_names("S.S.D._Potenza_Calcio"), "S.S.D. Potenza Calcio");
}

#[test]
fn literals_are_realized_by_rule() {
    assert_eq!(realize_literal("1930-09-08").as_deref(), Some("September 8, 1930"));
    assert_eq!(realize_literal("\"1932-03-15\"").as_deref(), Some("March 15, 1932"));
    assert_eq!(realize_literal("1500").as_deref(), Some("1500"));
    assert_eq!(realize_literal("-3.75").as_deref(), Some("-3.75"));
    assert_eq!(realize_literal("1930-13-08"), None);
    assert_eq!(realize_literal("Apollo_12"), None);
    assert_eq!(realize_literal("3.x"), None);
}

#[test]
fn without_a_model_every_slot_gets_its_name_or_literal() {
    let ordered = vec![
        Triple::new("Alan_Bean", "birthDate", "1932-03-15").unwrap(),
        Triple::new("Alan_Bean", "mission", "Apollo_12").unwrap(),
    ];
    let tpl = Template::parse_str("ENTITY-1 was born on ENTITY-2 and flew on ENTITY-3 .").unwrap();
    let bt = bind_entities(&tpl, &ordered).unwrap();
    let (rt, traces) = reg_resolve(&bt, None, &BTreeSet::new());
    assert_eq!(words(&rt), "Alan Bean was born on March 15 , 1932 and flew on Apollo 12 .");
    let policies: Vec<RegPolicy> = traces.iter().map(|t| t.policy).collect();
    assert_eq!(policies, [RegPolicy::OnlyNames, RegPolicy::Literal, RegPolicy::OnlyNames]);
}

#[test]
fn contexts_see_earlier_slots_realized_and_later_slots_as_identifiers() {
    let tpl = Template::parse_str("ENTITY-1 plays for ENTITY-2 and ENTITY-3 .").unwrap();
    let ordered = &drago_ordered()[..2];
    let bt = bind_entities(&tpl, ordered).unwrap();
    let (_, traces) = reg_resolve(&bt, None, &BTreeSet::new());
    assert_eq!(traces.len(), 3);
    assert!(traces[0].pre_context.is_empty());
    assert_eq!(traces[0].post_context, common::strings("plays for s.s.d._potenza_calcio and calcio_catania ."));
    assert_eq!(traces[1].pre_context, common::strings("massimo drago plays for"));
    assert_eq!(traces[1].post_context, common::strings("and calcio_catania ."));
    assert_eq!(traces[2].pre_context, common::strings("massimo drago plays for s.s.d. potenza calcio and"));
    assert_eq!(traces[2].post_context, ["."]);
}

#[test]
fn zero_epochs_gives_an_untrained_model() {
    let (m, report) = reg_train(&drago_instances(), &[], &quick(0), 1).unwrap();
    assert!(report.is_none());
    let err = m.generate(&[], &[], "Massimo_Drago").unwrap_err();
    assert!(matches!(err, Error::Neural(NeuralError::Untrained)));
}

#[test]
fn empty_training_set_is_rejected() {
    assert!(reg_train(&[], &[], &quick(1), 1).is_err());
}

#[test]
fn unknown_entity_is_an_error_and_falls_back_to_its_name() {
    let data = drago_instances();
    let (m, _) = reg_train(&data, &data, &quick(1), 1).unwrap();
    assert!(matches!(m.generate(&[], &[], "Nobody"), Err(Error::UnknownEntity(_))));
    let tpl = Template::parse_str("ENTITY-1 .").unwrap();
    let bt = bind_entities(&tpl, &[Triple::new("Nobody_Known", "p", "X").unwrap()]).unwrap();
    let seen: BTreeSet<String> = ["Nobody_Known".to_owned()].into();
    let (rt, traces) = reg_resolve(&bt, Some(&m), &seen);
    assert_eq!(words(&rt), "Nobody Known .");
    assert_eq!(traces[0].policy, RegPolicy::OnlyNames);
}

#[test]
fn dev_loss_decreases_over_five_evaluations() {
    let data = drago_instances();
    let (_, report) = reg_train(&data, &data, &quick(5), 2).unwrap();
    let evals = report.unwrap().evaluations;
    assert!(evals.len() >= 5, "{} evaluations", evals.len());
    assert!(evals[evals.len() - 1].dev_loss < evals[0].dev_loss, "{evals:?}");
}

#[test]
fn overfits_fifty_instances() {
    let reg = extract_reg_dataset(common::synthetic()).unwrap();
    let data: Vec<RegInstance> = reg.train.into_iter().step_by(7).take(50).collect();
    let (m, _) = reg_train(&data, &data, &quick(60), 3).unwrap();
    let correct = data
        .iter()
        .filter(|i| {
            let out = m.generate(&i.pre_context, &i.post_context, &i.entity).unwrap();
            out == i.refex.iter().map(|t| t.to_lowercase()).collect::<Vec<_>>()
        })
        .count();
    assert!(correct as f64 >= 0.95 * data.len() as f64, "{correct}/{}", data.len());
}

#[test]
fn overfit_model_produces_the_possessive_in_context() {
    let data = drago_instances();
    let (m, _) = reg_train(&data, &data, &quick(200), 4).unwrap();
    let his = &data[2];
    assert_eq!(m.generate(&his.pre_context, &his.post_context, &his.entity).unwrap(), ["his"]);
    let he = &data[4];
    assert_eq!(m.generate(&he.pre_context, &he.post_context, &he.entity).unwrap(), ["he"]);

    let tpl = Template::parse_str(&common::sample().entries[0].lexes[0].template).unwrap();
    let bt = bind_entities(&tpl, &drago_ordered()).unwrap();
    let (rt, traces) = reg_resolve(&bt, Some(&m), &m.seen_entities());
    assert!(traces.iter().all(|t| t.policy == RegPolicy::Neural));
    let text = words(&rt);
    assert!(text.contains(" his own club "), "{text}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reg.json");
    m.save(&path).unwrap();
    let back = RegModel::load(&path).unwrap();
    assert_eq!(back.generate(&his.pre_context, &his.post_context, &his.entity).unwrap(), ["his"]);
}

#[test]
fn generation_is_deterministic() {
    let data = drago_instances();
    let (a, _) = reg_train(&data, &data, &quick(3), 9).unwrap();
    let (b, _) = reg_train(&data, &data, &quick(3), 9).unwrap();
    assert_eq!(a, b);
    for i in &data {
        let x = a.generate(&i.pre_context, &i.post_context, &i.entity).unwrap();
        assert_eq!(x, a.generate(&i.pre_context, &i.post_context, &i.entity).unwrap());
    }
}
