use boxlab_core::labeling::parse_label_text;

#[test]
fn breed_replies_split_into_fine_and_base() {
    let table = [
        ("Dachshund (Dog)", "Dachshund", "Dog"),
        ("German Shepherd (Dog)", "German Shepherd", "Dog"),
        ("Siamese cat (Cat)", "Siamese cat", "Cat"),
        ("Himalayan cat (Cat)", "Himalayan cat", "Cat"),
    ];
    for (raw, fine, base) in table {
        let l = parse_label_text(raw).unwrap();
        assert_eq!((l.fine.as_str(), l.base.as_deref()), (fine, Some(base)), "{raw}");
        assert_eq!(l.raw, raw);
    }
}

#[test]
fn zoo_replies_have_no_base() {
    for raw in ["Saddle-Billed Stork", "Elephant Rhinoceros", "Giraffe", "Ankole-Watusi"] {
        let l = parse_label_text(raw).unwrap();
        assert_eq!((l.fine.as_str(), l.base.as_deref()), (raw, None));
    }
}
